"""Starting weights: cold (random), warm (checkpoint copy), shrink-and-perturb,
and a pretext-trained surrogate for generic pretrained weights."""

from dataclasses import dataclass

import numpy as np

from . import nn


@dataclass(frozen=True)
class ShrinkParams:
    alpha: float
    beta_scale: float = 0.01
    noise_seed: int = 0

    def __post_init__(self):
        if not 0.1 <= self.alpha <= 0.9 and self.alpha != 1.0:
            raise ValueError(f"alpha must lie in [0.1, 0.9] (or be exactly 1), got {self.alpha}")
        if self.beta_scale < 0:
            raise ValueError("beta_scale must be non-negative")


def _fans(kernel_shape):
    if len(kernel_shape) == 4:  # (out, in, k, k)
        rf = kernel_shape[2] * kernel_shape[3]
        return kernel_shape[1] * rf, kernel_shape[0] * rf
    return kernel_shape[0], kernel_shape[1]


def cold_init(spec, seed):
    """Glorot-uniform kernels, zero biases."""
    rng = np.random.default_rng([seed, 0xC01D])
    entries = []
    for index, kshape, bshape in spec.param_shapes():
        fan_in, fan_out = _fans(kshape)
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        entries.append(nn.LayerParams(index, rng.uniform(-limit, limit, size=kshape), np.zeros(bshape)))
    return nn.WeightSet(entries)


def pretrain_surrogate(spec, pretext, config, val_fraction=0.2):
    """Train a cold network on a pretext cohort and return its best weights.

    ``pretext`` is a :class:`~warmstart.data.Cohort`; the last ``val_fraction``
    of it is held out for checkpoint selection.
    """
    n = len(pretext)
    n_val = max(1, int(round(n * val_fraction)))
    train_set = nn.Dataset(pretext.images[:n - n_val], pretext.labels[:n - n_val])
    val_set = nn.Dataset(pretext.images[n - n_val:], pretext.labels[n - n_val:])
    result = nn.train(spec, cold_init(spec, config.rng_seed), train_set, val_set, config)
    return result.best.weights


def warm_init(checkpoint, spec=None):
    """Independent copy of the checkpoint's weights."""
    weights = checkpoint.weights if isinstance(checkpoint, nn.Checkpoint) else checkpoint
    if spec is not None:
        nn.check_weights(spec, weights)
    return weights.copy()


def shrink_perturb(weights, params):
    """Every parameter ``w`` becomes ``alpha * w + n`` with ``n ~ N(0, beta_scale**2)``.

    Biases are treated like kernels. The noise stream depends only on
    ``noise_seed``, so different ``alpha`` values share the same perturbation.
    """
    rng = np.random.default_rng([params.noise_seed, 0x5EED])
    out = []
    for a in weights.arrays():
        noise = rng.standard_normal(a.shape)
        if params.beta_scale == 0:
            out.append(params.alpha * a)
        else:
            out.append(params.alpha * a + params.beta_scale * noise)
    return nn.WeightSet.from_arrays(weights, out)
