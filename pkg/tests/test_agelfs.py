import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from warmstart import agelfs, init, nn

from conftest import fd_check

logits = st.lists(st.floats(-50, 50), min_size=2, max_size=6).map(np.array)


def _softmax(x):
    e = np.exp(x - x.max())
    return e / e.sum()


@settings(max_examples=50, deadline=None)
@given(x=logits)
def test_unit_fuzziness_is_softmax(x):
    np.testing.assert_allclose(agelfs.fuzzy_softmax(x, 1.0), _softmax(x), atol=1e-12, rtol=0)
    np.testing.assert_array_equal(agelfs.fuzzy_softmax(x[None], 1.0)[0], nn.stable_softmax(x[None])[0])


@settings(max_examples=50, deadline=None)
@given(x=logits, f=st.floats(1e-3, 20), c=st.floats(-100, 100))
def test_normalized_and_shift_invariant(x, f, c):
    p = agelfs.fuzzy_softmax(x, f)
    assert abs(p.sum() - 1) <= 1e-12
    np.testing.assert_allclose(agelfs.fuzzy_softmax(x + c, f), p, atol=1e-12, rtol=0)


def test_small_fuzziness_is_uniform():
    p = agelfs.fuzzy_softmax(np.array([3.0, -2.0, 7.0]), 1e-6)
    np.testing.assert_allclose(p, 1 / 3, atol=1e-5)


def test_hand_value():
    p = agelfs.fuzzy_softmax(np.array([2.0, 0.0]), 1.113)
    expected = math.exp(2.226) / (math.exp(2.226) + 1)
    assert abs(p[0] - expected) < 1e-12
    assert abs(p[0] - 0.9026) < 5e-5 and abs(p[1] - 0.0974) < 5e-5


def test_fuzziness_must_be_positive():
    with pytest.raises(ValueError):
        agelfs.fuzzy_softmax(np.zeros(2), 0.0)
    with pytest.raises(ValueError):
        agelfs.fuzzy_softmax(np.array([np.inf, 0.0]), 1.0)


def fuzziness_gradient_error(x, f):
    """d/df of sum(w * log softmax(f x)) against central differences."""
    w = np.linspace(0.3, 1.0, x.size)

    def obj(ff):
        return float(w @ np.log(agelfs.fuzzy_softmax(x, ff)))
    p = agelfs.fuzzy_softmax(x, f)
    analytic = float(w @ (x - p @ x))
    numeric = (obj(f + 1e-5) - obj(f - 1e-5)) / 2e-5
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-7)


def test_fuzziness_gradient_fd():
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert fuzziness_gradient_error(rng.normal(size=4), rng.uniform(0.2, 3)) < 1e-4


# -- head ----------------------------------------------------------------------


def _spec(seed=0, same=False):
    s = nn.default_spec()
    a = init.cold_init(s, 10 + seed)
    b = a.copy() if same else init.cold_init(s, 20 + seed)
    return agelfs.AgelfsSpec([(s, a), (s, b)], fuzziness_init=1.3, head_seed=seed)


def test_spec_validation():
    s = nn.default_spec()
    with pytest.raises(ValueError):
        agelfs.AgelfsSpec([(s, init.cold_init(s, 0))])
    other = nn.NetworkSpec((nn.Conv2D(2), nn.ReLU(), nn.GlobalAvgPool(), nn.Dense(2), nn.Softmax()),
                           input_shape=(1, 8, 8))
    with pytest.raises(nn.ShapeError):
        agelfs.AgelfsSpec([(s, init.cold_init(s, 0)), (other, init.cold_init(other, 0))])
    assert _spec().attention_dim == 16


def test_forward_rows_sum_to_one(rng):
    model = agelfs.init_head(_spec())
    p = agelfs.forward_agelfs(model, rng.random((6, 16, 16)))
    assert p.shape == (6, 2)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


def test_identical_constituents_symmetric(rng):
    h = agelfs.constituent_features(_spec(same=True), rng.random((5, 16, 16)))
    np.testing.assert_array_equal(h[:, :8], h[:, 8:])


def test_forward_geometry_mismatch(rng):
    with pytest.raises(nn.ShapeError):
        agelfs.forward_agelfs(agelfs.init_head(_spec()), rng.random((2, 12, 12)))


@pytest.mark.parametrize("fuzz", [1.0, 0.4, 2.5])
def test_head_gradients_fd(rng, fuzz):
    spec = _spec(1)
    spec.fuzziness_init = fuzz
    h = agelfs.constituent_features(spec, rng.random((7, 16, 16)))
    y = nn.one_hot(rng.integers(0, 2, 7))
    params = [np.array(p, dtype=float) for p in agelfs.init_head(spec).params()]
    params[1] = rng.normal(0, 0.3, params[1].shape)
    params[3] = rng.normal(0, 0.3, 2)
    _, grads = agelfs.head_loss_and_gradients(params, h, y)
    err = fd_check(lambda ps: agelfs.head_loss_and_gradients(ps, h, y)[0], params, grads)
    assert err < 1e-4


def _sets(n, seed):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    x = rng.random((n, 16, 16)) * 0.5 + 0.4 * y[:, None, None] * (rng.random((n, 16, 16)) > 0.5)
    return nn.Dataset(x, y)


def test_train_freezes_constituents_and_is_deterministic():
    spec = _spec(2)
    before = [nn.weights_to_json(w, s) for s, w in spec.constituents]
    cfg = nn.TrainConfig(max_epochs=5, patience=5, rng_seed=3)
    m1, r1 = agelfs.train_agelfs(spec, _sets(80, 0), _sets(30, 1), cfg)
    m2, r2 = agelfs.train_agelfs(spec, _sets(80, 0), _sets(30, 1), cfg)
    after = [nn.weights_to_json(w, s) for s, w in spec.constituents]
    assert before == after
    assert all(np.array_equal(a, b) for a, b in zip(m1.params(), m2.params()))
    assert r1.history == r2.history
    assert r1.best.val_loss == min(v for _, v in r1.history)
    assert 0 < m1.fuzziness < 5
    assert m1.raw_fuzziness != math.log(1.3)  # fuzziness is learned


def test_fuzziness_floor():
    spec = _spec()
    model = agelfs.init_head(spec)
    model.raw_fuzziness = -50.0
    assert model.fuzziness == pytest.approx(agelfs.FUZZINESS_FLOOR)


def test_json_roundtrip(rng):
    spec = _spec(4)
    model = agelfs.init_head(spec)
    text = agelfs.model_to_json(model, ["a.json", "b.json"])
    back = agelfs.model_from_json(text, spec.constituents)
    x = rng.random((3, 16, 16))
    np.testing.assert_array_equal(agelfs.forward_agelfs(back, x), agelfs.forward_agelfs(model, x))
    assert '"weights_path": "a.json"' in text
    with pytest.raises(ValueError):
        agelfs.model_to_json(model, ["a.json"])
