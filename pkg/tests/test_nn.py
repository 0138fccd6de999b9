import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from warmstart import init, nn

from conftest import fd_check, random_weights, toy_spec


# -- independent straight-line forward pass ---------------------------------


def _ref_conv_same(x, w, b):
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    p = k // 2
    xp = np.zeros((n, c, h + 2 * p, wd + 2 * p))
    xp[:, :, p:p + h, p:p + wd] = x
    out = np.empty((n, o, h, wd))
    for s in range(n):
        for oc in range(o):
            for i in range(h):
                for j in range(wd):
                    acc = b[oc]
                    for ic in range(c):
                        for di in range(k):
                            for dj in range(k):
                                acc += xp[s, ic, i + di, j + dj] * w[oc, ic, di, dj]
                    out[s, oc, i, j] = acc
    return out


def _ref_pool(x):
    n, c, h, w = x.shape
    out = np.empty((n, c, h // 2, w // 2))
    for i in range(h // 2):
        for j in range(w // 2):
            out[:, :, i, j] = x[:, :, 2 * i:2 * i + 2, 2 * j:2 * j + 2].max(axis=(2, 3))
    return out


def _ref_forward(weights, x):
    (w1, b1), (w2, b2), (wd, bd) = [(e.kernel, e.bias) for e in weights.entries]
    a = _ref_pool(np.maximum(_ref_conv_same(x, w1, b1), 0))
    a = _ref_pool(np.maximum(_ref_conv_same(a, w2, b2), 0))
    z = a.mean(axis=(2, 3)) @ wd + bd
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def test_forward_matches_reference(spec):
    weights = random_weights(spec, 1)
    x = np.random.default_rng(2).random((3, 1, 16, 16))
    np.testing.assert_allclose(nn.forward(spec, weights, x), _ref_forward(weights, x), rtol=0, atol=1e-9)


def test_zero_weights_give_half(spec, rng):
    p = nn.forward(spec, nn.zeros_like_spec(spec), rng.random((4, 16, 16)))
    np.testing.assert_array_equal(p, np.full((4, 2), 0.5))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.01, 5.0))
def test_rows_normalized(seed, scale):
    spec = nn.default_spec()
    p = nn.forward(spec, random_weights(spec, seed, scale), np.random.default_rng(seed).random((5, 16, 16)))
    assert np.all(p >= 0) and np.all(p <= 1)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


def test_shape_errors(spec, rng):
    w = init.cold_init(spec, 0)
    with pytest.raises(nn.ShapeError, match="input shape"):
        nn.forward(spec, w, rng.random((2, 15, 16)))
    with pytest.raises(nn.ShapeError):
        nn.forward(toy_spec(), w, rng.random((2, 6, 6)))
    with pytest.raises(nn.ShapeError):
        nn.NetworkSpec((nn.Conv2D(2), nn.GlobalAvgPool(), nn.Dense(3), nn.Softmax()))
    with pytest.raises(nn.ShapeError):
        nn.NetworkSpec((nn.Conv2D(2), nn.MaxPool2D(2), nn.MaxPool2D(2), nn.MaxPool2D(2),
                        nn.MaxPool2D(2), nn.MaxPool2D(2), nn.GlobalAvgPool(), nn.Dense(2), nn.Softmax()))


def test_default_spec_size(spec):
    assert init.cold_init(spec, 0).n_params == 354
    assert spec.feature_dim == 8
    assert nn.NetworkSpec.from_dict(spec.to_dict()) == spec


# -- loss and gradients ------------------------------------------------------


def test_loss_uniform_is_ln2(spec, rng):
    y = nn.one_hot(rng.integers(0, 2, 6))
    loss, _ = nn.loss_and_gradients(spec, nn.zeros_like_spec(spec), rng.random((6, 16, 16)), y)
    assert abs(loss - math.log(2)) < 1e-9


def test_loss_certain_prediction_near_zero():
    spec = toy_spec()
    w = nn.zeros_like_spec(spec)
    w.entries[-1].bias[:] = (0.0, 60.0)
    loss, _ = nn.loss_and_gradients(spec, w, np.zeros((3, 6, 6)), nn.one_hot([1, 1, 1]))
    assert loss <= 1e-10


def test_labels_must_be_one_hot(spec, rng):
    w = init.cold_init(spec, 0)
    with pytest.raises(ValueError, match="one-hot"):
        nn.loss_and_gradients(spec, w, rng.random((2, 16, 16)), np.array([[0.5, 0.5], [1, 0]]))
    with pytest.raises(nn.ShapeError):
        nn.loss_and_gradients(spec, w, rng.random((2, 16, 16)), np.array([[1, 0]]))


def _gradient_error(spec, weights, x, y):
    loss, grads = nn.loss_and_gradients(spec, weights, x, y)
    params = [a.copy() for a in weights.arrays()]

    def f(ps):
        return nn.loss_and_gradients(spec, nn.WeightSet.from_arrays(weights, ps), x, y)[0]
    return fd_check(f, params, grads.arrays())


def test_gradients_toy_net(rng):
    spec = toy_spec()
    x = rng.normal(size=(5, 1, 6, 6))
    y = nn.one_hot(rng.integers(0, 2, 5))
    assert _gradient_error(spec, random_weights(spec, 3), x, y) < 1e-4


def test_gradients_default_net(spec, rng):
    x = rng.normal(size=(4, 1, 16, 16))
    y = nn.one_hot([0, 1, 1, 0])
    assert _gradient_error(spec, random_weights(spec, 4, 0.4), x, y) < 1e-4


def test_gradients_strided_net(rng):
    spec = nn.NetworkSpec((nn.Conv2D(3, 3, 2), nn.ReLU(), nn.Conv2D(2, 3, 1), nn.ReLU(),
                           nn.GlobalAvgPool(), nn.Dense(2), nn.Softmax()), input_shape=(2, 7, 7))
    x = rng.normal(size=(3, 2, 7, 7))
    assert _gradient_error(spec, random_weights(spec, 5), x, nn.one_hot([1, 0, 1])) < 1e-4


# -- Adam ----------------------------------------------------------------------


def test_adam_first_step():
    cfg = nn.TrainConfig()
    w = [np.zeros(1)]
    new, state = nn.adam_update(w, [np.full(1, 0.5)], nn.AdamState.zeros(w), cfg)
    assert state.t == 1
    assert abs(new[0][0] - (-0.001 * 0.5 / (0.5 + 1e-8))) < 1e-15
    assert abs(new[0][0] - (-9.9999998e-4)) < 1e-12


def test_adam_two_steps_scalar_recursion():
    cfg = nn.TrainConfig(learning_rate=0.01)
    g, w, m, v = 0.3, 0.2, 0.0, 0.0
    params, state = [np.array([w])], nn.AdamState.zeros([np.zeros(1)])
    for t in (1, 2):
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w = w - 0.01 * (m / (1 - 0.9 ** t)) / (math.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        params, state = nn.adam_update(params, [np.array([g])], state, cfg)
        assert abs(params[0][0] - w) < 1e-12


def test_adam_zero_gradient_keeps_weights(spec):
    w = init.cold_init(spec, 1)
    grads = nn.zeros_like_spec(spec)
    new, _ = nn.adam_step(w, grads, nn.AdamState.zeros(w.arrays()), nn.TrainConfig())
    assert new.equal(w)


def test_adam_shape_mismatch(spec):
    w = init.cold_init(spec, 1)
    with pytest.raises(nn.ShapeError):
        nn.adam_step(w, nn.zeros_like_spec(toy_spec()), nn.AdamState.zeros(w.arrays()), nn.TrainConfig())


# -- training ------------------------------------------------------------------


def blobs(n, seed, sep=0.35):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n)
    x = rng.normal(0.5, 0.05, (n, 6, 6)) + np.where(y == 1, sep, -sep)[:, None, None] * (
        np.arange(6) >= 3)[None, None, :]
    return nn.Dataset(x, y)


def test_train_one_epoch():
    spec = toy_spec()
    r = nn.train(spec, random_weights(spec, 0), blobs(40, 1), blobs(20, 2),
                 nn.TrainConfig(max_epochs=1, patience=0))
    assert len(r.history) == 1 and r.best.epoch == 1
    assert r.best.val_loss == r.history[0][1]


def test_train_deterministic_and_best_is_min():
    spec = toy_spec()
    cfg = nn.TrainConfig(max_epochs=8, patience=2, rng_seed=7, batch_size=16)
    a = nn.train(spec, random_weights(spec, 0), blobs(80, 1), blobs(30, 2), cfg)
    b = nn.train(spec, random_weights(spec, 0), blobs(80, 1), blobs(30, 2), cfg)
    assert a.best.weights.equal(b.best.weights)
    assert a.history == b.history and a.steps == b.steps
    assert a.best.val_loss == min(v for _, v in a.history)
    assert a.wall_seconds >= 0


def test_train_separable_blobs():
    # Linearly separable classes: a learning rate of 1e-2 reaches ~0.01 in 50 epochs.
    spec = toy_spec()
    r = nn.train(spec, init.cold_init(spec, 0), blobs(300, 1), blobs(100, 2),
                 nn.TrainConfig(learning_rate=1e-2, max_epochs=50, patience=50, rng_seed=0))
    assert r.best.val_loss < 0.1


def test_train_rejects_empty(spec):
    empty = nn.Dataset(np.zeros((0, 16, 16)), np.zeros(0, dtype=int))
    with pytest.raises(ValueError, match="non-empty"):
        nn.train(spec, init.cold_init(spec, 0), empty, empty, nn.TrainConfig())


def test_train_diverges_loudly():
    spec = toy_spec()
    data = blobs(20, 1)
    data.images[3, 0, 0] = np.nan
    with pytest.raises(nn.TrainingDiverged, match="non-finite"):
        nn.train(spec, random_weights(spec, 0), data, blobs(10, 2), nn.TrainConfig(max_epochs=2))


def test_early_stopping_patience():
    spec = toy_spec()
    cfg = nn.TrainConfig(max_epochs=40, patience=0, rng_seed=1, learning_rate=0.5)
    r = nn.train(spec, random_weights(spec, 0), blobs(40, 1), blobs(20, 2), cfg)
    vals = [v for _, v in r.history]
    assert len(vals) == 40 or vals[-1] >= min(vals[:-1])


def test_train_config_validation():
    with pytest.raises(ValueError):
        nn.TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        nn.TrainConfig(batch_size=0)


def test_epochs_to_target():
    h = [(0, 0.7), (0, 0.5), (0, 0.4)]
    assert nn.epochs_to_target(h, 0.5) == 2
    assert nn.epochs_to_target(h, 0.1) is None


# -- serialization -------------------------------------------------------------


def test_weights_json_roundtrip(spec):
    w = random_weights(spec, 9)
    text = nn.weights_to_json(w, spec)
    assert nn.weights_from_json(text, spec).equal(w)
    assert nn.weights_to_json(nn.weights_from_json(text, spec), spec) == text


def test_weights_json_rejects_other_spec(spec):
    text = nn.weights_to_json(random_weights(spec, 9), spec)
    with pytest.raises(nn.ShapeError):
        nn.weights_from_json(text, toy_spec())


def test_predict_scores_chunks(spec, rng):
    w = init.cold_init(spec, 2)
    x = rng.random((7, 16, 16))
    np.testing.assert_array_equal(nn.predict_scores(spec, w, x, batch_size=3),
                                  nn.forward(spec, w, x)[:, 1])
