"""One-dimensional Bayesian optimization with a Matern-5/2 Gaussian process.

The GP uses a constant prior mean equal to the mean of the observed
objectives, a fixed length scale, and a signal variance taken from the
random-start phase. Expected improvement is maximized over a dense grid.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

PENALTY = 1e6
GRID_POINTS = 512


@dataclass
class Observation:
    alpha: float
    objective: float
    call_index: int = 0
    phase: str = "random"
    penalized: bool = False


@dataclass(frozen=True)
class BOConfig:
    lower: float = 0.1
    upper: float = 0.9
    n_calls: int = 100
    n_random_starts: int = 30
    seed: int = 0
    kernel_length_scale: float = 0.2
    noise_variance: float = 1e-6

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError("lower must be below upper")
        if not 1 <= self.n_random_starts <= self.n_calls:
            raise ValueError("need 1 <= n_random_starts <= n_calls")


@dataclass
class GPState:
    observations: list = field(default_factory=list)
    length_scale: float = 0.2
    signal_variance: float = 1.0
    noise_variance: float = 1e-6


def matern52(a, b, length_scale, signal_variance):
    r = np.abs(np.subtract.outer(np.asarray(a, float), np.asarray(b, float))) / length_scale
    s5 = math.sqrt(5.0) * r
    return signal_variance * (1.0 + s5 + 5.0 / 3.0 * r * r) * np.exp(-s5)


def _factor(state):
    x = np.array([o.alpha for o in state.observations])
    y = np.array([o.objective for o in state.observations])
    k = matern52(x, x, state.length_scale, state.signal_variance)
    jitter = state.noise_variance
    for _ in range(4):
        try:
            chol = np.linalg.cholesky(k + jitter * np.eye(len(x)))
            break
        except np.linalg.LinAlgError:
            jitter = max(jitter * 10.0, 1e-10)
    else:
        raise np.linalg.LinAlgError("GP covariance stayed singular after 3 jitter escalations")
    mean0 = float(y.mean())
    weights = np.linalg.solve(chol.T, np.linalg.solve(chol, y - mean0))
    return x, chol, weights, mean0


def gp_posterior_many(state, alphas):
    """Posterior mean and variance at each query point."""
    if not state.observations:
        raise ValueError("GP posterior needs at least one observation")
    x, chol, weights, mean0 = _factor(state)
    ks = matern52(alphas, x, state.length_scale, state.signal_variance)
    mean = mean0 + ks @ weights
    v = np.linalg.solve(chol, ks.T)
    var = state.signal_variance - np.einsum("ij,ij->j", v, v)
    return mean, np.maximum(var, 0.0)


def gp_posterior(state, alpha):
    mean, var = gp_posterior_many(state, np.array([alpha], dtype=float))
    return float(mean[0]), float(var[0])


def _ei(mean, var, best):
    sd = np.sqrt(var)
    gain = best - mean
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sd > 0, gain / np.where(sd > 0, sd, 1.0), 0.0)
    ei = np.where(sd > 0, gain * norm.cdf(z) + sd * norm.pdf(z), np.maximum(gain, 0.0))
    return np.maximum(ei, 0.0)


def expected_improvement(state, alpha, best_observed):
    """``E[max(best_observed - f(alpha), 0)]`` under the posterior (minimization)."""
    mean, var = gp_posterior(state, alpha)
    return float(_ei(np.array([mean]), np.array([var]), best_observed)[0])


def minimize(objective, config):
    """Returns ``(best_alpha, best_value, trace)``; ``trace`` has ``n_calls`` entries."""
    rng = np.random.default_rng(config.seed)
    trace = []
    grid = np.linspace(config.lower, config.upper, GRID_POINTS)
    state = GPState(length_scale=config.kernel_length_scale, noise_variance=config.noise_variance)

    def evaluate(alpha, phase):
        value = float(objective(float(alpha)))
        bad = not math.isfinite(value)
        obs = Observation(float(alpha), PENALTY if bad else value, len(trace), phase, bad)
        trace.append(obs)
        state.observations.append(obs)

    for alpha in rng.uniform(config.lower, config.upper, size=config.n_random_starts):
        evaluate(alpha, "random")
    ys = np.array([o.objective for o in trace if not o.penalized])
    var = float(ys.var()) if ys.size > 1 else 0.0
    state.signal_variance = var if var > 0 else 1.0

    for _ in range(config.n_calls - config.n_random_starts):
        best = min(o.objective for o in trace)
        mean, v = gp_posterior_many(state, grid)
        evaluate(grid[int(np.argmax(_ei(mean, v, best)))], "ei")

    i = min(range(len(trace)), key=lambda j: (trace[j].objective, j))
    return trace[i].alpha, trace[i].objective, trace


def write_trace_csv(trace, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "objective", "call_index", "phase"])
        for o in trace:
            w.writerow([repr(o.alpha), repr(o.objective), o.call_index, o.phase])
