"""Weight-space ensembles: equal averaging and F-score-optimized simplex mixing."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize as sp_minimize

from . import nn
from .stats import best_f_score

log = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-6


@dataclass(frozen=True)
class SimplexFactors:
    factors: tuple

    def __post_init__(self):
        f = tuple(float(x) for x in self.factors)
        object.__setattr__(self, "factors", f)
        if any(not 0.0 <= x <= 1.0 for x in f):
            raise ValueError(f"factors must lie in [0, 1]: {f}")
        if abs(sum(f) - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"factors must sum to 1 (got {sum(f)!r})")

    def __len__(self):
        return len(self.factors)


@dataclass
class EnsembleResult:
    factors: SimplexFactors
    weights: nn.WeightSet
    validation_error: float
    restarts_run: int

    def to_json(self, weights_path=None):
        return json.dumps({
            "factors": list(self.factors.factors),
            "validation_error": self.validation_error,
            "restarts_run": self.restarts_run,
            "weights_path": weights_path,
        }, indent=2) + "\n"


def weighted_average(models, factors):
    """Parameter-wise ``sum_i factors[i] * models[i]``."""
    if not isinstance(factors, SimplexFactors):
        factors = SimplexFactors(tuple(factors))
    if len(models) != len(factors):
        raise ValueError(f"{len(models)} models but {len(factors)} factors")
    if not models:
        raise ValueError("no models to average")
    for m in models[1:]:
        if not models[0].same_shape(m):
            raise nn.ShapeError("models are not shape-congruent")
    out = [factors.factors[0] * a for a in models[0].arrays()]
    for f, m in zip(factors.factors[1:], models[1:]):
        out = [acc + f * a for acc, a in zip(out, m.arrays())]
    return nn.WeightSet.from_arrays(models[0], out)


def ewa(models):
    """Equal-weight average of two or more models."""
    if len(models) < 2:
        raise ValueError("equal weight averaging needs at least 2 models")
    k = len(models)
    return weighted_average(models, SimplexFactors((1.0 / k,) * k))


def _to_simplex(z):
    """Softmax of ``[z, 0]``: free logits for all but the last factor."""
    full = np.append(z, 0.0)
    e = np.exp(full - full.max())
    return e / e.sum()


def _project(f):
    f = np.clip(np.asarray(f, dtype=np.float64), 0.0, 1.0)
    return f / f.sum()


def restart_points(k, restarts, seed):
    """Vertices, the barycenter, then seeded Dirichlet(1) draws up to ``restarts``."""
    pts = [np.eye(k)[i] for i in range(k)] + [np.full(k, 1.0 / k)]
    rng = np.random.default_rng([seed, k])
    while len(pts) < restarts:
        pts.append(rng.dirichlet(np.ones(k)))
    return pts[:max(restarts, k + 1)]


def fslsqp(models, spec, val_set, restarts=100, seed=0, maxfev=12):
    """Mixing factors on the simplex minimizing ``1 - F`` of the averaged model.

    F is taken at the F-maximizing threshold on ``val_set``. Each restart
    evaluates its start point, then runs a Nelder-Mead search in softmax
    coordinates capped at ``maxfev`` evaluations. Ties keep the earliest
    restart.
    """
    if len(models) < 2:
        raise ValueError("need at least 2 models")
    if len(val_set) == 0:
        raise ValueError("validation set is empty")
    k = len(models)
    x = nn._as_batch(spec, val_set.images)
    y = np.asarray(val_set.labels)
    if y.sum() == 0:
        log.warning("validation set has no positives; F-score is taken as 0")
    cache = {}

    def error(f):
        key = tuple(np.round(f, 15))
        if key not in cache:
            ws = weighted_average(models, SimplexFactors(tuple(f)))
            probs, _ = nn._run(spec, ws, x)
            cache[key] = 1.0 - best_f_score(probs[:, 1], y)
        return cache[key]

    best = (np.inf, None, -1)
    starts = restart_points(k, restarts, seed)
    for r, start in enumerate(starts):
        start = _project(start)
        candidates = [(error(start), start)]
        z0 = np.log(np.maximum(start, 1e-6))
        z0 = z0[:-1] - z0[-1]
        simplex = np.vstack([z0] + [z0 + np.eye(k - 1)[i] for i in range(k - 1)])
        seen = []

        def objective(z):
            f = _project(_to_simplex(z))
            e = error(f)
            seen.append((e, f))
            return e

        sp_minimize(objective, z0, method="Nelder-Mead",
                    options={"maxfev": maxfev, "initial_simplex": simplex, "xatol": 1e-4, "fatol": 0.0})
        candidates.extend(seen)
        for e, f in candidates:
            if e < best[0]:
                best = (e, f, r)
    err, f, _ = best
    factors = SimplexFactors(tuple(f))
    return EnsembleResult(factors, weighted_average(models, factors), float(err), len(starts))
