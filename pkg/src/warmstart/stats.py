"""Threshold selection, classification metrics, confidence intervals, the
CI-based z-test, and weight-similarity measures."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .nn import WeightSet

Z95 = 1.96


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self):
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricsReport:
    auprc: float
    balanced_accuracy: float
    precision: float
    recall: float
    f_score: float
    mcc: float
    mcc_ci: tuple
    threshold: float
    n: int
    counts: ConfusionCounts | None = None


@dataclass(frozen=True)
class SignificanceResult:
    se1: float
    se2: float
    delta_mcc: float
    delta_se: float
    z: float
    p_two_tailed: float
    significant: bool


def _check_binary(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(np.int64)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    return s, y


def _require_both_classes(y):
    if y.sum() == 0 or y.sum() == y.size:
        raise ValueError("both classes must be present")


# ---------------------------------------------------------------------------
# Confusion-matrix metrics
# ---------------------------------------------------------------------------


def confusion(scores, labels, threshold):
    """Predict positive when ``score >= threshold``."""
    s, y = _check_binary(scores, labels)
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    return ConfusionCounts(tp, fp, y.size - tp - fp - fn, fn)


def _ratio(a, b):
    return a / b if b else 0.0


def metrics(counts):
    """Balanced accuracy, precision, recall, F-score and MCC.

    Zero denominators give 0 (including MCC).
    """
    tp, fp, tn, fn = counts.tp, counts.fp, counts.tn, counts.fn
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    specificity = _ratio(tn, tn + fp)
    # 2TP / (2TP + FP + FN): one correctly rounded division, so equal F-scores compare equal
    f = _ratio(2 * tp, 2 * tp + fp + fn)
    denom = math.sqrt(float(tp + fp) * float(tp + fn) * float(tn + fp) * float(tn + fn))
    mcc = _ratio(float(tp) * tn - float(fp) * fn, denom)
    return {
        "balanced_accuracy": (recall + specificity) / 2.0,
        "precision": precision,
        "recall": recall,
        "f_score": f,
        "mcc": max(-1.0, min(1.0, mcc)),
    }


def _f_scores_at_candidates(s, y):
    """F-score at every candidate threshold: 0, midpoints of distinct scores, 1."""
    uniq = np.unique(s)
    cands = np.concatenate(([0.0], (uniq[:-1] + uniq[1:]) / 2.0, [1.0]))
    order = np.sort(s)
    pos = np.sort(s[y == 1])
    n_pred = s.size - np.searchsorted(order, cands, side="left")
    tp = pos.size - np.searchsorted(pos, cands, side="left")
    fp = n_pred - tp
    fn = pos.size - tp
    denom = 2 * tp + fp + fn
    f = np.where(denom > 0, 2.0 * tp / np.where(denom > 0, denom, 1), 0.0)
    return cands, f


def optimal_threshold(scores, labels):
    """Lowest candidate threshold maximizing the F-score."""
    s, y = _check_binary(scores, labels)
    _require_both_classes(y)
    cands, f = _f_scores_at_candidates(s, y)
    return float(cands[int(np.argmax(f))])


def best_f_score(scores, labels):
    """Maximum F-score over the candidate thresholds; 0 if there are no positives."""
    s, y = _check_binary(scores, labels)
    if y.sum() == 0:
        return 0.0
    return float(_f_scores_at_candidates(s, y)[1].max())


def auprc(scores, labels):
    """Step-wise average precision; tied scores form a single step."""
    s, y = _check_binary(scores, labels)
    _require_both_classes(y)
    precision, recall, _ = pr_curve(s, y)
    return float(np.sum(np.diff(np.concatenate(([0.0], recall))) * precision))


def pr_curve(scores, labels):
    """``(precision, recall, thresholds)`` at each distinct score, descending."""
    s, y = _check_binary(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    precision = tp / (tp + fp)
    recall = tp / max(int(y.sum()), 1)
    return precision, recall, s[last]


# ---------------------------------------------------------------------------
# Intervals and significance
# ---------------------------------------------------------------------------


def clopper_pearson(k, n, level=0.95):
    """Exact binomial interval from Beta quantiles."""
    if not (isinstance(k, (int, np.integer)) and isinstance(n, (int, np.integer))):
        raise TypeError("k and n must be integers")
    if n < 1 or not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n and n >= 1, got k={k}, n={n}")
    a = (1.0 - level) / 2.0
    lower = 0.0 if k == 0 else float(sps.beta.ppf(a, k, n - k + 1))
    upper = 1.0 if k == n else float(sps.beta.ppf(1.0 - a, k + 1, n - k))
    return lower, upper


def mcc_ci(mcc, n, level=0.95):
    """Clopper-Pearson interval for MCC via the proportion ``(mcc + 1) / 2``."""
    if not -1.0 <= mcc <= 1.0 or n < 1:
        raise ValueError("mcc must lie in [-1, 1] and n >= 1")
    k = int(round((mcc + 1.0) / 2.0 * n))
    lo, hi = clopper_pearson(k, int(n), level)
    return 2.0 * lo - 1.0, 2.0 * hi - 1.0


def standard_error(ci):
    lo, hi = ci
    return (hi - lo) / (2.0 * Z95)


def significance(value1, ci1, value2, ci2):
    """CI-width z-test of ``value2 - value1`` with a two-tailed normal p-value."""
    for lo, hi in (ci1, ci2):
        if lo > hi:
            raise ValueError(f"confidence interval ({lo}, {hi}) is not ordered")
    se1, se2 = standard_error(ci1), standard_error(ci2)
    delta = value2 - value1
    delta_se = math.sqrt(se1 * se1 + se2 * se2)
    if delta_se == 0:
        raise ValueError("both confidence intervals are degenerate")
    z = delta / delta_se
    p = float(2.0 * sps.norm.sf(abs(z)))
    return SignificanceResult(se1, se2, delta, delta_se, z, p, p < 0.05)


def evaluate(scores, labels, threshold, level=0.95):
    s, y = _check_binary(scores, labels)
    counts = confusion(s, y, threshold)
    m = metrics(counts)
    return MetricsReport(
        auprc=auprc(s, y), mcc_ci=mcc_ci(m["mcc"], y.size, level),
        threshold=float(threshold), n=int(y.size), counts=counts, **m)


def recall_ci(counts, level=0.95):
    """Clopper-Pearson interval on ``tp / (tp + fn)``."""
    positives = counts.tp + counts.fn
    if positives == 0:
        return 0.0, 1.0
    return clopper_pearson(counts.tp, positives, level)


# ---------------------------------------------------------------------------
# Weight similarity
# ---------------------------------------------------------------------------


def _flat(w):
    if isinstance(w, WeightSet):
        return w.flatten()
    return np.ravel(np.asarray(w, dtype=np.float64))


def emd_1d(weights_a, weights_b):
    """Wasserstein-1 distance between the empirical distributions of all parameters."""
    a, b = _flat(weights_a), _flat(weights_b)
    if a.size == 0 or b.size == 0:
        raise ValueError("weight sets must be non-empty")
    return float(sps.wasserstein_distance(a, b))


def weight_correlation(weights_a, weights_b):
    """Pearson correlation of position-paired parameters."""
    a, b = _flat(weights_a), _flat(weights_b)
    if a.shape != b.shape:
        raise ValueError("weight sets are not shape-congruent")
    da, db = a - a.mean(), b - b.mean()
    saa, sbb = float(da @ da), float(db @ db)
    if saa == 0 or sbb == 0:
        raise ValueError("zero-variance weights have no correlation")
    r = float(da @ db) / math.sqrt(saa * sbb)
    return max(-1.0, min(1.0, r))


def softmax_histogram(scores, labels, bins=50):
    """Per-class density histograms of positive-class probabilities on [0, 1]."""
    if bins < 2:
        raise ValueError("need at least 2 bins")
    s, y = _check_binary(scores, labels)
    edges = np.linspace(0.0, 1.0, bins + 1)
    out = {}
    for cls in (0, 1):
        vals = s[y == cls]
        counts, _ = np.histogram(vals, bins=edges)
        width = np.diff(edges)
        density = counts / (vals.size * width) if vals.size else np.zeros(bins)
        out[cls] = {"edges": edges, "counts": counts, "density": density, "empty": vals.size == 0}
    return out


# ---------------------------------------------------------------------------
# CSV rows
# ---------------------------------------------------------------------------

METRIC_COLUMNS = ["auprc", "balanced_accuracy", "precision", "recall", "f_score", "mcc",
                  "mcc_ci_lower", "mcc_ci_upper", "threshold", "n"]
SIGNIFICANCE_COLUMNS = ["se1", "se2", "delta", "delta_se", "z", "p_two_tailed", "significant"]


def report_row(report):
    return [repr(float(report.auprc)), repr(float(report.balanced_accuracy)),
            repr(float(report.precision)), repr(float(report.recall)), repr(float(report.f_score)),
            repr(float(report.mcc)), repr(float(report.mcc_ci[0])), repr(float(report.mcc_ci[1])),
            repr(float(report.threshold)), str(report.n)]


def significance_row(res):
    return [repr(res.se1), repr(res.se2), repr(res.delta_mcc), repr(res.delta_se),
            repr(res.z), repr(res.p_two_tailed), "1" if res.significant else "0"]


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


__all__ = ["ConfusionCounts", "MetricsReport", "SignificanceResult", "confusion", "metrics",
           "optimal_threshold", "best_f_score", "auprc", "pr_curve", "clopper_pearson",
           "mcc_ci", "significance", "evaluate", "recall_ci", "emd_1d", "weight_correlation",
           "softmax_histogram"]
