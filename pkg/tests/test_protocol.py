import csv
import json
import os

import numpy as np
import pytest

from warmstart import config, nn, protocol, stats

SMALL = """
[protocol]
seeds = 0 1
convergence_target = 0.68
[data]
n_internal = 400
n_external = 120
n_pretext = 400
[train]
max_epochs = 3
patience = 3
[pretrain]
max_epochs = 3
patience = 3
[search]
n_calls = 6
n_random_starts = 3
[ensemble]
restarts = 4
maxfev = 6
head_epochs = 3
head_patience = 3
"""


@pytest.fixture(scope="module")
def small_cfg():
    return config.parse_config(SMALL)


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory, small_cfg):
    out = str(tmp_path_factory.mktemp("proto") / "out")
    failures = protocol.run_protocol(small_cfg, out, seeds=(0,))
    assert failures == []
    return out


def _csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def test_manifest(run_dir):
    m = json.load(open(os.path.join(run_dir, "seed_0", "manifest.json")))
    assert all(m["stages"][s]["status"] == "ok" for s in protocol.STAGES)
    assert len(m["models"]) == 21 and len(set(m["models"])) == 21
    assert m["models"] == list(protocol.ALL_MODELS)
    assert "reports/metrics.csv" in m["files"]
    top = json.load(open(os.path.join(run_dir, "manifest.json")))
    assert top["seeds_reported"] == [0] and top["counts"]["seeds"] == 1


def test_model_names():
    assert len(protocol.SINGLE_MODELS) == 9 and len(protocol.ENSEMBLES) == 12
    assert "AGELFS(Cold-IF+Warm-IF+Shrink-IF)" in protocol.ENSEMBLES


def test_expected_files(run_dir):
    d = os.path.join(run_dir, "seed_0")
    for rel in ["alpha/alpha1_trace.csv", "alpha/alpha2_trace.csv", "alpha/alphas.json",
                "reports/scores.csv", "reports/metrics.csv", "reports/significance.csv",
                "reports/pr_curve.csv", "reports/softmax_hist.csv", "reports/emd.csv",
                "reports/weight_scatter.csv", "reports/weight_correlation.csv",
                "reports/training.csv", "reports/directional.json"]:
        assert os.path.exists(os.path.join(d, rel)), rel
    for name in protocol.P_MODELS + protocol.F_MODELS:
        assert os.path.exists(os.path.join(d, "models", protocol.slug(name) + ".json"))
    for e in protocol.ENSEMBLES:
        assert os.path.exists(os.path.join(d, "ensembles", protocol.slug(e) + ".json"))


def test_csv_headers(run_dir):
    d = os.path.join(run_dir, "seed_0", "reports")
    assert _csv(os.path.join(d, "metrics.csv"))[0] == protocol.METRICS_COLUMNS
    assert _csv(os.path.join(d, "scores.csv"))[0] == protocol.SCORE_COLUMNS
    assert _csv(os.path.join(d, "significance.csv"))[0] == protocol.SIG_COLUMNS
    assert _csv(os.path.join(d, "pr_curve.csv"))[0] == protocol.PR_COLUMNS
    assert _csv(os.path.join(d, "softmax_hist.csv"))[0] == protocol.HIST_COLUMNS
    assert _csv(os.path.join(run_dir, "summary.csv"))[0] == protocol.SUMMARY_COLUMNS
    h, rows = _csv(os.path.join(run_dir, "seed_0", "alpha", "alpha1_trace.csv"))
    assert h == ["alpha", "objective", "call_index", "phase"] and len(rows) == 6


def test_metrics_recomputed_from_scores(run_dir):
    d = os.path.join(run_dir, "seed_0", "reports")
    scores = protocol.read_scores(os.path.join(d, "scores.csv"))
    table = protocol.read_metrics(os.path.join(d, "metrics.csv"))
    run = protocol.SeedRun(config.parse_config(SMALL), run_dir, 0)
    assert len(table) == 21 * 5
    for (name, tag), (y, s) in scores.items():
        _, meta = run.scorer(name)
        rep = stats.evaluate(s, y, meta["threshold"])
        row = table[(name, tag)]
        for key in ("precision", "recall", "f_score", "mcc", "balanced_accuracy", "auprc"):
            assert abs(getattr(rep, key) - float(row["row"][key])) <= 1e-9, (name, tag, key)
        assert rep.counts == row["counts"]


def test_scores_are_probabilities(run_dir):
    scores = protocol.read_scores(os.path.join(run_dir, "seed_0", "reports", "scores.csv"))
    for y, s in scores.values():
        assert np.all((s >= 0) & (s <= 1))


def test_emd_matrix(run_dir):
    h, rows = _csv(os.path.join(run_dir, "seed_0", "reports", "emd.csv"))
    assert h[1:] == list(protocol.SINGLE_MODELS)
    m = np.array([[float(v) for v in r[1:]] for r in rows])
    assert m.shape == (9, 9)
    np.testing.assert_array_equal(np.diag(m), 0)
    np.testing.assert_allclose(m, m.T, atol=1e-12)
    assert np.all(m >= 0)


def test_alphas_in_bounds(run_dir):
    a = json.load(open(os.path.join(run_dir, "seed_0", "alpha", "alphas.json")))
    for key in ("alpha1", "alpha2"):
        assert 0.1 <= a[key]["alpha"] <= 0.9


def test_ensemble_factors_on_simplex(run_dir):
    d = os.path.join(run_dir, "seed_0", "ensembles")
    for e in protocol.ENSEMBLES:
        doc = json.load(open(os.path.join(d, protocol.slug(e) + ".json")))
        if e.startswith("F-SLSQP"):
            assert abs(sum(doc["factors"]) - 1) <= 1e-6 and min(doc["factors"]) >= 0
        if e.startswith("AGELFS"):
            meta = json.load(open(os.path.join(d, protocol.slug(e) + ".meta.json")))
            assert meta["fuzziness"] >= 1e-3


def test_training_table(run_dir):
    h, rows = _csv(os.path.join(run_dir, "seed_0", "reports", "training.csv"))
    assert h == protocol.TRAINING_COLUMNS
    assert [r[0] for r in rows] == list(protocol.P_MODELS + protocol.F_MODELS)
    inits = {r[0]: r[1] for r in rows}
    assert inits["Cold-IP"] == "surrogate" and inits["Cold-RP"] != "surrogate"


def test_directional(run_dir):
    d = json.load(open(os.path.join(run_dir, "seed_0", "reports", "directional.json")))
    assert set(d["if_beats_rf_internal_mcc"]) == {"Cold-RF<Cold-IF", "Warm-RF<Warm-IF", "Shrink-RF<Shrink-IF"}
    assert d["all_if_beat_rf"] == all(d["if_beats_rf_internal_mcc"].values())
    assert len(d["fuzziness"]) == 4


def test_deterministic_rerun(run_dir, small_cfg, tmp_path):
    out = str(tmp_path / "again")
    assert protocol.run_protocol(small_cfg, out, seeds=(0,)) == []
    a, b = os.path.join(run_dir, "seed_0"), os.path.join(out, "seed_0")
    ma = json.load(open(os.path.join(a, "manifest.json")))
    mb = json.load(open(os.path.join(b, "manifest.json")))
    assert ma["files"] == mb["files"]
    assert ma["config_hash"] == mb["config_hash"]


def test_missing_prerequisite(small_cfg, tmp_path):
    out = str(tmp_path / "o")
    failures = protocol.run_stages(small_cfg, out, ("ensemble",), seeds=(0,))
    assert len(failures) == 1 and "needs 'generate'" in failures[0]
    m = json.load(open(os.path.join(out, "seed_0", "manifest.json")))
    assert m["stages"]["ensemble"]["status"] == "skipped"


def test_failed_stage_marks_later_stale(run_dir, small_cfg, tmp_path):
    import shutil
    out = str(tmp_path / "copy")
    shutil.copytree(run_dir, out)
    os.remove(os.path.join(out, "seed_0", "models", protocol.slug("Cold-IF") + ".json"))
    failures = protocol.run_stages(small_cfg, out, ("ensemble",), seeds=(0,))
    assert failures and "failed" in failures[0]
    stages = json.load(open(os.path.join(out, "seed_0", "manifest.json")))["stages"]
    assert stages["ensemble"]["status"] == "failed"
    assert all(stages[s]["status"] == "stale" for s in ("evaluate", "significance", "report"))
    # downstream stages now refuse to run
    assert protocol.run_stages(small_cfg, out, ("evaluate",), seeds=(0,))


def test_conflicting_config_rejected(run_dir):
    with pytest.raises(protocol.StageError):
        protocol.write_config(config.ProtocolConfig(), run_dir)


def test_single_models_loadable(run_dir, small_cfg):
    run = protocol.SeedRun(small_cfg, run_dir, 0)
    for name in protocol.SINGLE_MODELS:
        w = run.load_weights(name)
        assert w.n_params == 354
