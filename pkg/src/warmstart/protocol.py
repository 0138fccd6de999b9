"""End-to-end study protocol, run stage by stage through an output directory.

Layout of ``out/``::

    config.ini                 normalized configuration
    surrogate/weights.json     pretext-pretrained weights (shared by all seeds)
    seed_<s>/manifest.json     per-seed stage status and produced files
    seed_<s>/...               data, models, traces, ensembles, reports
    summary.csv                per-seed directional outcomes (after ``report``)
    manifest.json              top-level index

Every stage reads its inputs from disk, so running stages one by one gives
the same bytes as ``run-all``. No timestamps or wall-clock times are written
into the tree; timings are logged instead.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
import os
import time
from dataclasses import dataclass, replace

import numpy as np

from . import agelfs, data, ensembles, gp, init, nn, paper_values, stats
from .config import ProtocolConfig

log = logging.getLogger(__name__)

SURROGATE = "Surrogate"
P_MODELS = ("Cold-RP", "Cold-IP")
F_MODELS = ("Cold-RF", "Cold-IF", "Warm-RF", "Warm-IF", "Shrink-RF", "Shrink-IF")
SINGLE_MODELS = (SURROGATE,) + P_MODELS + F_MODELS
CONSTITUENTS = ("Cold-IF", "Warm-IF", "Shrink-IF")
COMBOS = (("Cold-IF", "Warm-IF"), ("Cold-IF", "Shrink-IF"), ("Warm-IF", "Shrink-IF"),
          ("Cold-IF", "Warm-IF", "Shrink-IF"))
FAMILIES = ("EWA", "F-SLSQP", "AGELFS")
ENSEMBLES = tuple(f"{fam}({'+'.join(c)})" for fam in FAMILIES for c in COMBOS)
ALL_MODELS = SINGLE_MODELS + ENSEMBLES
EXTERNAL_TESTS = ("ext_adult", "ext_ped2", "ext_ped11", "ext_ped18")
TESTS = ("internal",) + EXTERNAL_TESTS
STAGES = ("generate", "train", "search-alpha", "ensemble", "evaluate", "significance", "report")
RF_IF_PAIRS = (("Cold-RF", "Cold-IF"), ("Warm-RF", "Warm-IF"), ("Shrink-RF", "Shrink-IF"))


class StageError(RuntimeError):
    pass


def slug(name):
    return (name.lower().replace("(", "__").replace(")", "").replace("+", "_")
            .replace("-", "").replace(" ", ""))


def _write(path, text):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


def _json(path, obj):
    _write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


def _sha(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Shared surrogate
# ---------------------------------------------------------------------------


def surrogate_path(out):
    return os.path.join(out, "surrogate", "weights.json")


def ensure_surrogate(config, out, spec):
    """Pretrain once per output tree; later calls load the stored weights."""
    path = surrogate_path(out)
    if os.path.exists(path):
        with open(path) as fh:
            return nn.weights_from_json(fh.read(), spec)
    t0 = time.perf_counter()
    pretext = data.generate_pretext(config.data.n_pretext, config.data.pretext_seed)
    tc = replace(config.pretrain, rng_seed=config.data.pretext_seed)
    weights = init.pretrain_surrogate(spec, pretext, tc)
    _write(path, nn.weights_to_json(weights, spec))
    log.info("surrogate pretrained in %.1fs", time.perf_counter() - t0)
    return weights


# ---------------------------------------------------------------------------
# Per-seed run
# ---------------------------------------------------------------------------


@dataclass
class Splits:
    test: data.Cohort
    p_train: data.Cohort
    p_val: data.Cohort
    f_train: data.Cohort
    f_val: data.Cohort
    external: dict


class SeedRun:
    """All artifacts of one protocol seed under ``out/seed_<seed>``."""

    def __init__(self, config, out, seed, spec=None):
        self.config = config
        self.out = out
        self.seed = int(seed)
        self.dir = os.path.join(out, f"seed_{self.seed}")
        self.spec = spec or nn.default_spec()
        self._splits = None

    # -- paths ---------------------------------------------------------------

    def path(self, *parts):
        return os.path.join(self.dir, *parts)

    def model_path(self, name):
        return self.path("models", slug(name) + ".json")

    def meta_path(self, name):
        return self.path("models", slug(name) + ".meta.json")

    # -- manifest ------------------------------------------------------------

    def manifest(self):
        p = self.path("manifest.json")
        if os.path.exists(p):
            return _read_json(p)
        return {"seed": self.seed, "config_hash": self.config.config_hash(),
                "stages": {}, "files": {}, "models": list(ALL_MODELS)}

    def _record(self, stage, status, files=(), error=None):
        m = self.manifest()
        entry = {"status": status}
        if error:
            entry["error"] = error
        m["stages"][stage] = entry
        for f in files:
            rel = os.path.relpath(f, self.dir)
            m["files"][rel] = _sha(f)
        m["files"] = dict(sorted(m["files"].items()))
        _json(self.path("manifest.json"), m)

    def stage_done(self, stage):
        return self.manifest()["stages"].get(stage, {}).get("status") == "ok"

    def run_stage(self, stage):
        idx = STAGES.index(stage)
        for prev in STAGES[:idx]:
            if not self.stage_done(prev):
                self._record(stage, "skipped", error=f"prerequisite stage {prev!r} not complete")
                raise StageError(f"seed {self.seed}: stage {stage!r} needs {prev!r}")
        t0 = time.perf_counter()
        try:
            files = getattr(self, "stage_" + stage.replace("-", "_"))()
        except Exception as exc:
            self._record(stage, "failed", error=f"{type(exc).__name__}: {exc}")
            for later in STAGES[idx + 1:]:
                if later in self.manifest()["stages"]:
                    self._record(later, "stale")
            raise StageError(f"seed {self.seed}: stage {stage!r} failed: {exc}") from exc
        self._record(stage, "ok", files)
        log.info("seed %d: %s done in %.1fs", self.seed, stage, time.perf_counter() - t0)

    # -- data ----------------------------------------------------------------

    def cohort_path(self, tag):
        return self.path("data", tag + ".jsonl")

    def stage_generate(self):
        d = self.config.data
        files = []
        for tag in TESTS:
            n = d.n_internal if tag == "internal" else d.n_external
            cohort = data.generate_cohort(data.preset_config(tag, n, self.seed))
            p = self.cohort_path(tag)
            os.makedirs(os.path.dirname(p), exist_ok=True)
            data.write_jsonl(cohort, p)
            files += [p, p + ".manifest.json"]
        return files

    def splits(self):
        if self._splits is None:
            internal = data.read_jsonl(self.cohort_path("internal"))
            sp = data.split_group_level(internal)
            halves = data.halve_periodic(sp["train"], sp["val"])
            ext = {t: data.read_jsonl(self.cohort_path(t)) for t in EXTERNAL_TESTS}
            self._splits = Splits(sp["test"], *halves["P"], *halves["F"], ext)
        return self._splits

    def test_cohort(self, tag):
        s = self.splits()
        return s.test if tag == "internal" else s.external[tag]

    # -- models --------------------------------------------------------------

    def save_model(self, name, weights, meta):
        _write(self.model_path(name), nn.weights_to_json(weights, self.spec))
        _json(self.meta_path(name), meta)
        return [self.model_path(name), self.meta_path(name)]

    def load_weights(self, name):
        if name == SURROGATE:
            return ensure_surrogate(self.config, self.out, self.spec)
        with open(self.model_path(name)) as fh:
            return nn.weights_from_json(fh.read(), self.spec)

    def load_meta(self, name):
        return _read_json(self.meta_path(name))

    def _train(self, name, start, train_c, val_c, init_label):
        result = nn.train(self.spec, start, train_c.dataset(), val_c.dataset(),
                          self.config.train_config(self.seed))
        scores = nn.predict_scores(self.spec, result.best.weights, val_c.images)
        theta = stats.optimal_threshold(scores, val_c.labels)
        log.info("seed %d: %s trained, %d epochs, %.2fs", self.seed, name,
                 len(result.history), result.wall_seconds)
        meta = {"name": name, "init": init_label, "val_loss": result.best.val_loss,
                "best_epoch": result.best.epoch, "epochs_run": len(result.history),
                "train_steps": result.steps, "threshold": theta,
                "history": [list(h) for h in result.history]}
        return result.best.weights, meta

    def stage_train(self):
        s = self.splits()
        sur = ensure_surrogate(self.config, self.out, self.spec)
        files = [surrogate_path(self.out)]
        sur_scores = nn.predict_scores(self.spec, sur, s.f_val.images)
        files += self.save_model(SURROGATE, sur, {
            "name": SURROGATE, "init": "pretext", "threshold":
            stats.optimal_threshold(sur_scores, s.f_val.labels)})
        cold = init.cold_init(self.spec, self.seed)
        w, m = self._train("Cold-RP", cold, s.p_train, s.p_val, "cold")
        files += self.save_model("Cold-RP", w, m)
        w, m = self._train("Cold-IP", init.warm_init(sur), s.p_train, s.p_val, "surrogate")
        files += self.save_model("Cold-IP", w, m)
        plan = [("Cold-RF", cold, "cold"),
                ("Cold-IF", init.warm_init(sur), "surrogate"),
                ("Warm-RF", init.warm_init(self.load_weights("Cold-RP")), "warm:Cold-RP"),
                ("Warm-IF", init.warm_init(self.load_weights("Cold-IP")), "warm:Cold-IP")]
        for name, start, label in plan:
            w, m = self._train(name, start, s.f_train, s.f_val, label)
            files += self.save_model(name, w, m)
        return files

    # -- alpha search --------------------------------------------------------

    def alpha_objective(self, base):
        """Validation loss after a short fine-tune on F from shrunk ``base`` weights."""
        s = self.splits()
        sc = self.config.search
        tc = replace(self.config.train_config(self.seed), max_epochs=sc.finetune_epochs, patience=0)
        train_set, val_set = s.f_train.dataset(), s.f_val.dataset()

        def objective(alpha):
            start = init.shrink_perturb(base, init.ShrinkParams(alpha, sc.beta_scale, self.seed))
            try:
                return nn.train(self.spec, start, train_set, val_set, tc).best.val_loss
            except nn.TrainingDiverged:
                return float("nan")
        return objective

    def stage_search_alpha(self):
        s = self.splits()
        sc = self.config.search
        files, alphas = [], {}
        for key, source, target in (("alpha1", "Cold-RP", "Shrink-RF"),
                                    ("alpha2", "Cold-IP", "Shrink-IF")):
            base = self.load_weights(source)
            t0 = time.perf_counter()
            alpha, value, trace = gp.minimize(self.alpha_objective(base), sc.bo_config(self.seed))
            log.info("seed %d: %s = %.4f (%.1fs)", self.seed, key, alpha, time.perf_counter() - t0)
            p = self.path("alpha", f"{key}_trace.csv")
            os.makedirs(os.path.dirname(p), exist_ok=True)
            gp.write_trace_csv(trace, p)
            files.append(p)
            alphas[key] = {"alpha": alpha, "objective": value, "source": source}
            start = init.shrink_perturb(base, init.ShrinkParams(alpha, sc.beta_scale, self.seed))
            w, m = self._train(target, start, s.f_train, s.f_val, f"shrink:{source}@{alpha!r}")
            files += self.save_model(target, w, m)
        p = self.path("alpha", "alphas.json")
        _json(p, alphas)
        files.append(p)
        return files

    # -- ensembles -----------------------------------------------------------

    def ensemble_prefix(self, name):
        return self.path("ensembles", slug(name))

    def stage_ensemble(self):
        s = self.splits()
        val = s.f_val.dataset()
        weights = {n: self.load_weights(n) for n in CONSTITUENTS}
        files = []
        for fam, combo in itertools.product(FAMILIES, COMBOS):
            name = f"{fam}({'+'.join(combo)})"
            prefix = self.ensemble_prefix(name)
            models = [weights[n] for n in combo]
            wpath = os.path.relpath(prefix + ".weights.json", self.dir)
            refs = [os.path.relpath(self.model_path(n), self.dir) for n in combo]
            if fam == "AGELFS":
                aspec = agelfs.AgelfsSpec([(self.spec, w) for w in models], head_seed=self.seed)
                model, result = agelfs.train_agelfs(aspec, s.f_train.dataset(), val,
                                                    self.config.head_config(self.seed))
                scores = agelfs.forward_agelfs(model, s.f_val.images)[:, 1]
                _write(prefix + ".json", agelfs.model_to_json(model, refs))
                meta = {"family": fam, "constituents": list(combo), "fuzziness": model.fuzziness,
                        "val_loss": result.best.val_loss, "best_epoch": result.best.epoch,
                        "train_steps": result.steps}
                files.append(prefix + ".json")
            else:
                if fam == "EWA":
                    avg = ensembles.ewa(models)
                    factors = [1.0 / len(models)] * len(models)
                    doc = {"factors": factors, "weights_path": wpath}
                else:
                    res = ensembles.fslsqp(models, self.spec, val, self.config.ensemble.restarts,
                                           self.seed, self.config.ensemble.maxfev)
                    avg = res.weights
                    doc = json.loads(res.to_json(wpath))
                doc["constituents"] = refs
                _json(prefix + ".json", doc)
                _write(prefix + ".weights.json", nn.weights_to_json(avg, self.spec))
                scores = nn.predict_scores(self.spec, avg, s.f_val.images)
                meta = {"family": fam, "constituents": list(combo), "factors": doc["factors"]}
                files += [prefix + ".json", prefix + ".weights.json"]
            meta["threshold"] = stats.optimal_threshold(scores, s.f_val.labels)
            _json(prefix + ".meta.json", meta)
            files.append(prefix + ".meta.json")
        return files

    def ensemble_scorer(self, name):
        prefix = self.ensemble_prefix(name)
        meta = _read_json(prefix + ".meta.json")
        if meta["family"] == "AGELFS":
            constituents = [(self.spec, self.load_weights(n)) for n in meta["constituents"]]
            with open(prefix + ".json") as fh:
                model = agelfs.model_from_json(fh.read(), constituents)
            return (lambda x: agelfs.forward_agelfs(model, x)[:, 1]), meta
        with open(prefix + ".weights.json") as fh:
            w = nn.weights_from_json(fh.read(), self.spec)
        return (lambda x: nn.predict_scores(self.spec, w, x)), meta

    def scorer(self, name):
        if name in ENSEMBLES:
            return self.ensemble_scorer(name)
        w = self.load_weights(name)
        return (lambda x: nn.predict_scores(self.spec, w, x)), self.load_meta(name)

    # -- evaluation ----------------------------------------------------------

    def stage_evaluate(self):
        rows_scores, rows_metrics = [], []
        for name in ALL_MODELS:
            score_fn, meta = self.scorer(name)
            for tag in TESTS:
                c = self.test_cohort(tag)
                sc = score_fn(c.images)
                rep = stats.evaluate(sc, c.labels, meta["threshold"])
                rows_metrics.append([name, tag] + stats.report_row(rep) +
                                    [rep.counts.tp, rep.counts.fp, rep.counts.tn, rep.counts.fn])
                rows_scores += [[name, tag, i, int(y), repr(float(v))]
                                for i, (y, v) in enumerate(zip(c.labels, sc))]
        p_scores, p_metrics = self.path("reports", "scores.csv"), self.path("reports", "metrics.csv")
        os.makedirs(os.path.dirname(p_scores), exist_ok=True)
        stats.write_csv(p_scores, SCORE_COLUMNS, rows_scores)
        stats.write_csv(p_metrics, METRICS_COLUMNS, rows_metrics)
        return [p_scores, p_metrics]

    def metrics_table(self):
        return read_metrics(self.path("reports", "metrics.csv"))

    # -- significance --------------------------------------------------------

    def stage_significance(self):
        table = self.metrics_table()
        rows = []

        def mcc_row(tag, a, b):
            ra, rb = table[(a, tag)], table[(b, tag)]
            res = stats.significance(ra["mcc"], ra["mcc_ci"], rb["mcc"], rb["mcc_ci"])
            rows.append([tag, "mcc", a, b, repr(ra["mcc"]), repr(rb["mcc"])] + stats.significance_row(res))

        def recall_row(tag, a, b):
            ra, rb = table[(a, tag)], table[(b, tag)]
            res = stats.significance(ra["recall"], stats.recall_ci(ra["counts"]),
                                     rb["recall"], stats.recall_ci(rb["counts"]))
            rows.append([tag, "recall", a, b, repr(ra["recall"]), repr(rb["recall"])] +
                        stats.significance_row(res))

        safe = _guard(rows)
        safe(mcc_row, "internal", "Cold-RP", "Cold-IP")
        for a, b in RF_IF_PAIRS:
            safe(mcc_row, "internal", a, b)
        for tag in TESTS:
            for a, b in itertools.combinations(CONSTITUENTS, 2):
                safe(mcc_row, tag, a, b)
        baseline = max(CONSTITUENTS, key=lambda n: (table[(n, "internal")]["mcc"], -CONSTITUENTS.index(n)))
        for tag in TESTS:
            for e in ENSEMBLES:
                safe(mcc_row, tag, baseline, e)
                safe(recall_row, tag, baseline, e)
        p = self.path("reports", "significance.csv")
        stats.write_csv(p, SIG_COLUMNS, rows)
        return [p]

    # -- reports -------------------------------------------------------------

    def stage_report(self):
        scores = read_scores(self.path("reports", "scores.csv"))
        files = []
        pr_rows, hist_rows = [], []
        for (name, tag), (y, s) in scores.items():
            prec, rec, thr = stats.pr_curve(s, y)
            pr_rows += [[name, tag, repr(float(a)), repr(float(b)), repr(float(c))]
                        for a, b, c in zip(prec, rec, thr)]
            hist = stats.softmax_histogram(s, y, bins=50)
            for cls in (0, 1):
                h = hist[cls]
                for i in range(len(h["counts"])):
                    hist_rows.append([name, tag, cls, repr(float(h["edges"][i])), repr(float(h["edges"][i + 1])),
                                      int(h["counts"][i]), repr(float(h["density"][i])), int(h["empty"])])
        for fname, header, rows in (("pr_curve.csv", PR_COLUMNS, pr_rows),
                                    ("softmax_hist.csv", HIST_COLUMNS, hist_rows)):
            p = self.path("reports", fname)
            stats.write_csv(p, header, rows)
            files.append(p)

        weights = {n: self.load_weights(n) for n in SINGLE_MODELS}
        names = list(SINGLE_MODELS)
        emd_rows = [[a] + [repr(stats.emd_1d(weights[a], weights[b])) for b in names] for a in names]
        p = self.path("reports", "emd.csv")
        stats.write_csv(p, ["model"] + names, emd_rows)
        files.append(p)

        scatter, corr = [], []
        for a, b in itertools.combinations(CONSTITUENTS, 2):
            wa, wb = weights[a].flatten(), weights[b].flatten()
            idx = np.arange(wa.size)
            if wa.size > SCATTER_CAP:
                idx = np.sort(np.random.default_rng([self.seed, 0x5CA7]).choice(wa.size, SCATTER_CAP, replace=False))
            scatter += [[a, b, int(i), repr(float(wa[i])), repr(float(wb[i]))] for i in idx]
            corr.append([a, b, repr(stats.weight_correlation(weights[a], weights[b])),
                         repr(stats.emd_1d(weights[a], weights[b]))])
        for fname, header, rows in (("weight_scatter.csv", SCATTER_COLUMNS, scatter),
                                    ("weight_correlation.csv", ["model_a", "model_b", "pearson_r", "emd"], corr)):
            p = self.path("reports", fname)
            stats.write_csv(p, header, rows)
            files.append(p)

        p = self.path("reports", "training.csv")
        rows = []
        for name in P_MODELS + F_MODELS:
            m = self.load_meta(name)
            rows.append([name, m["init"], repr(m["val_loss"]), m["best_epoch"], m["epochs_run"],
                         m["train_steps"], repr(m["threshold"]),
                         _fmt_epoch(nn.epochs_to_target(m["history"], self.config.convergence_target))])
        stats.write_csv(p, TRAINING_COLUMNS, rows)
        files.append(p)

        p = self.path("reports", "directional.json")
        _json(p, self.directional())
        files.append(p)
        return files

    def directional(self):
        """Per-seed directional outcomes compared against the published findings."""
        table = self.metrics_table()
        target = self.config.convergence_target
        e_r = nn.epochs_to_target(self.load_meta("Cold-RP")["history"], target)
        e_i = nn.epochs_to_target(self.load_meta("Cold-IP")["history"], target)
        i_faster = e_i is not None and (e_r is None or e_i < e_r)
        if_wins = {f"{a}<{b}": table[(b, "internal")]["mcc"] > table[(a, "internal")]["mcc"]
                   for a, b in RF_IF_PAIRS}
        pooled = {n: _pooled_recall(table, n) for n in CONSTITUENTS + ENSEMBLES}
        ens_ok = []
        for e in ENSEMBLES:
            members = e[e.index("(") + 1:-1].split("+")
            if pooled[e] >= max(pooled[m] for m in members):
                ens_ok.append(e)
        alphas = _read_json(self.path("alpha", "alphas.json"))
        fuzz = {e: _read_json(self.ensemble_prefix(e) + ".meta.json")["fuzziness"]
                for e in ENSEMBLES if e.startswith("AGELFS")}
        return {
            "seed": self.seed,
            "convergence_target": target,
            "epochs_to_target": {"Cold-RP": e_r, "Cold-IP": e_i},
            "pretrained_converges_faster": i_faster,
            "if_beats_rf_internal_mcc": if_wins,
            "all_if_beat_rf": all(if_wins.values()),
            "pooled_external_recall": pooled,
            "ensembles_matching_best_constituent_recall": ens_ok,
            "ensemble_recall_ok": bool(ens_ok),
            "alpha1": alphas["alpha1"]["alpha"],
            "alpha2": alphas["alpha2"]["alpha"],
            "fuzziness": fuzz,
        }


SCATTER_CAP = 10_000
SCORE_COLUMNS = ["model", "test", "index", "label", "score"]
METRICS_COLUMNS = ["model", "test"] + stats.METRIC_COLUMNS + ["tp", "fp", "tn", "fn"]
SIG_COLUMNS = ["test", "metric", "model1", "model2", "value1", "value2"] + stats.SIGNIFICANCE_COLUMNS
PR_COLUMNS = ["model", "test", "precision", "recall", "threshold"]
HIST_COLUMNS = ["model", "test", "class", "bin_lower", "bin_upper", "count", "density", "class_empty"]
SCATTER_COLUMNS = ["model_a", "model_b", "param_index", "weight_a", "weight_b"]
TRAINING_COLUMNS = ["model", "init", "best_val_loss", "best_epoch", "epochs_run", "train_steps",
                    "threshold", "epochs_to_target"]
SUMMARY_COLUMNS = ["seed", "epochs_to_target_cold", "epochs_to_target_pretrained",
                   "pretrained_converges_faster", "if_beats_rf_count", "all_if_beat_rf",
                   "ensemble_recall_ok", "alpha1", "alpha2"]


def _fmt_epoch(e):
    return "" if e is None else str(e)


def _guard(rows):
    """Run a row builder; degenerate intervals become a row of blanks rather than a crash."""
    def call(fn, tag, a, b):
        try:
            fn(tag, a, b)
        except ValueError as exc:
            log.warning("significance %s %s vs %s skipped: %s", tag, a, b, exc)
            rows.append([tag, fn.__name__.split("_")[0], a, b, "", ""] + [""] * len(stats.SIGNIFICANCE_COLUMNS))
    return call


def _pooled_recall(table, name):
    tp = sum(table[(name, t)]["counts"].tp for t in EXTERNAL_TESTS)
    fn = sum(table[(name, t)]["counts"].fn for t in EXTERNAL_TESTS)
    return tp / (tp + fn) if tp + fn else 0.0


def read_metrics(path):
    out = {}
    with open(path) as fh:
        for r in csv.DictReader(fh):
            counts = stats.ConfusionCounts(int(r["tp"]), int(r["fp"]), int(r["tn"]), int(r["fn"]))
            out[(r["model"], r["test"])] = {
                "mcc": float(r["mcc"]), "recall": float(r["recall"]),
                "mcc_ci": (float(r["mcc_ci_lower"]), float(r["mcc_ci_upper"])),
                "threshold": float(r["threshold"]), "counts": counts,
                "row": r,
            }
    return out


def read_scores(path):
    acc = {}
    with open(path) as fh:
        for r in csv.DictReader(fh):
            y, s = acc.setdefault((r["model"], r["test"]), ([], []))
            y.append(int(r["label"]))
            s.append(float(r["score"]))
    return {k: (np.array(y), np.array(s)) for k, (y, s) in acc.items()}


# ---------------------------------------------------------------------------
# Whole protocol
# ---------------------------------------------------------------------------


def write_config(config, out):
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "config.ini")
    text = config.to_ini()
    if os.path.exists(path):
        with open(path) as fh:
            if fh.read() != text:
                raise StageError(f"{path} holds a different configuration; use a fresh --out")
    _write(path, text)


def run_stages(config, out, stages, seeds=None):
    """Run ``stages`` for each seed in order. Returns the list of failures."""
    write_config(config, out)
    failures = []
    for seed in seeds if seeds is not None else config.seeds:
        run = SeedRun(config, out, seed)
        for stage in stages:
            try:
                run.run_stage(stage)
            except StageError as exc:
                log.error("%s", exc)
                failures.append(str(exc))
                break
    if "report" in stages:
        write_summary(config, out)
    return failures


def run_protocol(config, out, seeds=None):
    return run_stages(config, out, STAGES, seeds)


def write_summary(config, out):
    """Cross-seed directional summary and top-level manifest."""
    rows, seeds = [], []
    for seed in config.seeds:
        p = os.path.join(out, f"seed_{seed}", "reports", "directional.json")
        if not os.path.exists(p):
            continue
        d = _read_json(p)
        seeds.append(seed)
        e = d["epochs_to_target"]
        rows.append([seed, _fmt_epoch(e["Cold-RP"]), _fmt_epoch(e["Cold-IP"]),
                     int(d["pretrained_converges_faster"]), sum(d["if_beats_rf_internal_mcc"].values()),
                     int(d["all_if_beat_rf"]), int(d["ensemble_recall_ok"]),
                     repr(d["alpha1"]), repr(d["alpha2"])])
    stats.write_csv(os.path.join(out, "summary.csv"), SUMMARY_COLUMNS, rows)
    _json(os.path.join(out, "manifest.json"), {
        "config_hash": config.config_hash(),
        "seeds_reported": seeds,
        "models": list(ALL_MODELS),
        "counts": {
            "pretrained_converges_faster": sum(r[3] for r in rows),
            "all_if_beat_rf": sum(r[5] for r in rows),
            "ensemble_recall_ok": sum(r[6] for r in rows),
            "seeds": len(rows),
        },
    })


# ---------------------------------------------------------------------------
# Published-value replication
# ---------------------------------------------------------------------------


REPLICATION_COLUMNS = ["table", "test", "model1", "model2", "mcc1", "mcc2"] + stats.SIGNIFICANCE_COLUMNS


def replicate_paper_significance(published):
    """Significance chain over ``[(table, test, (label, mcc, ci), (label, mcc, ci)), ...]``."""
    out = []
    for item in published:
        try:
            table, test, (l1, m1, ci1), (l2, m2, ci2) = item
            m1, m2 = float(m1), float(m2)
            ci1, ci2 = tuple(map(float, ci1)), tuple(map(float, ci2))
        except (TypeError, ValueError) as exc:
            raise ValueError(f"malformed published entry {item!r}") from exc
        if len(ci1) != 2 or len(ci2) != 2:
            raise ValueError(f"malformed confidence interval in {item!r}")
        out.append((table, test, l1, l2, m1, m2, stats.significance(m1, ci1, m2, ci2)))
    return out


def published_comparisons():
    """The reported comparisons: Table 4 pair, Table 5 RF/IF pairs, Table 6 in-test pairs."""
    items = [("4", "internal", *paper_values.INTERNAL_P)]
    rows = {r[0]: r for r in paper_values.INTERNAL_F}
    items += [("5", "internal", rows[a], rows[b]) for a, b in paper_values.INTERNAL_F_PAIRS]
    for test, triple in paper_values.EXTERNAL.items():
        items += [("6", test, a, b) for a, b in itertools.combinations(triple, 2)]
    return items


def replication_rows(results):
    return [[t, test, a, b, repr(m1), repr(m2)] + stats.significance_row(res)
            for t, test, a, b, m1, m2, res in results]
