import numpy as np
import pytest

from warmstart import nn

FD_STEP = 1e-5
# Components smaller than this are dominated by finite-difference roundoff
# (~eps * loss / h); the relative error uses it as a denominator floor.
FD_FLOOR = 1e-7


def rel_error(analytic, numeric):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), FD_FLOOR)


def fd_check(loss_fn, params, grads, step=FD_STEP):
    """Largest relative error between ``grads`` and central differences of ``loss_fn``."""
    worst = 0.0
    for i, p in enumerate(params):
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + step
            up = loss_fn(params)
            p[idx] = orig - step
            down = loss_fn(params)
            p[idx] = orig
            worst = max(worst, rel_error(grads[i][idx], (up - down) / (2 * step)))
    return worst


def toy_spec():
    """Conv-ReLU-GAP-Dense-Softmax on 6x6 inputs (2-layer net, 36 parameters)."""
    return nn.NetworkSpec((nn.Conv2D(2, 3, 1), nn.ReLU(), nn.GlobalAvgPool(), nn.Dense(2), nn.Softmax()),
                          input_shape=(1, 6, 6))


def random_weights(spec, seed, scale=0.5):
    rng = np.random.default_rng(seed)
    return nn.WeightSet([nn.LayerParams(i, rng.normal(0, scale, k), rng.normal(0, 0.1, b))
                         for i, k, b in spec.param_shapes()])


@pytest.fixture
def spec():
    return nn.default_spec()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
