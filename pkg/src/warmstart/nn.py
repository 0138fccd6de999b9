"""A small deterministic convolutional classifier trained with Adam.

Activations are NCHW float64 arrays. Convolutions use "same" padding
(``kernel_size // 2``). Every parameterized layer owns a kernel and a bias;
those pairs, in layer order, form a :class:`WeightSet`.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field, replace
import numpy as np

from . import kernels

PROB_CLAMP = 1e-12


class ShapeError(ValueError):
    """Input, label or parameter dimensions do not fit the network."""


class TrainingDiverged(RuntimeError):
    """A non-finite loss showed up during training."""


# ---------------------------------------------------------------------------
# Architecture description
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Conv2D:
    out_channels: int
    kernel_size: int = 3
    stride: int = 1


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class MaxPool2D:
    size: int = 2


@dataclass(frozen=True)
class GlobalAvgPool:
    pass


@dataclass(frozen=True)
class Dense:
    out_dim: int


@dataclass(frozen=True)
class Softmax:
    pass


LAYER_TYPES = {cls.__name__: cls for cls in (Conv2D, ReLU, MaxPool2D, GlobalAvgPool, Dense, Softmax)}


@dataclass(frozen=True)
class NetworkSpec:
    """Layer list plus input geometry ``(channels, height, width)``."""

    layers: tuple
    input_shape: tuple = (1, 16, 16)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        tail = self.layers[-3:]
        if (len(tail) != 3 or not isinstance(tail[0], GlobalAvgPool)
                or tail[1] != Dense(2) or not isinstance(tail[2], Softmax)):
            raise ShapeError("network must end with GlobalAvgPool, Dense(2), Softmax")
        self.shapes()  # validates the chain

    def shapes(self):
        """Activation shape (without batch axis) after each layer."""
        shape = self.input_shape
        out = []
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Conv2D):
                if len(shape) != 3:
                    raise ShapeError(f"layer {i}: Conv2D needs a (C, H, W) input, got {shape}")
                c, h, w = shape
                k, s = layer.kernel_size, layer.stride
                p = k // 2
                shape = (layer.out_channels, (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1)
            elif isinstance(layer, MaxPool2D):
                if len(shape) != 3 or shape[1] % layer.size or shape[2] % layer.size:
                    raise ShapeError(f"layer {i}: MaxPool2D({layer.size}) does not tile {shape}")
                shape = (shape[0], shape[1] // layer.size, shape[2] // layer.size)
            elif isinstance(layer, GlobalAvgPool):
                if len(shape) != 3:
                    raise ShapeError(f"layer {i}: GlobalAvgPool needs a (C, H, W) input, got {shape}")
                shape = (shape[0],)
            elif isinstance(layer, Dense):
                if len(shape) != 1:
                    raise ShapeError(f"layer {i}: Dense needs a flat input, got {shape}")
                shape = (layer.out_dim,)
            elif isinstance(layer, Softmax):
                if i != len(self.layers) - 1:
                    raise ShapeError("Softmax must be the last layer")
            elif not isinstance(layer, ReLU):
                raise ShapeError(f"layer {i}: unsupported layer {layer!r}")
            if any(d <= 0 for d in shape):
                raise ShapeError(f"layer {i}: collapsed to shape {shape}")
            out.append(shape)
        return out

    def param_shapes(self):
        """``[(layer_index, kernel_shape, bias_shape), ...]`` for parameterized layers."""
        shapes = [self.input_shape] + self.shapes()
        result = []
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Conv2D):
                k = layer.kernel_size
                result.append((i, (layer.out_channels, shapes[i][0], k, k), (layer.out_channels,)))
            elif isinstance(layer, Dense):
                result.append((i, (shapes[i][0], layer.out_dim), (layer.out_dim,)))
        return result

    @property
    def gap_index(self):
        return len(self.layers) - 3

    @property
    def feature_dim(self):
        return self.shapes()[self.gap_index][0]

    def to_dict(self):
        return {
            "input_shape": list(self.input_shape),
            "layers": [{"type": type(l).__name__, **l.__dict__} for l in self.layers],
        }

    @classmethod
    def from_dict(cls, d):
        layers = []
        for item in d["layers"]:
            item = dict(item)
            layers.append(LAYER_TYPES[item.pop("type")](**item))
        return cls(tuple(layers), tuple(d["input_shape"]))

    def spec_hash(self):
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def default_spec():
    """Two Conv-ReLU-MaxPool blocks on 16x16 inputs, then GAP, Dense(2), Softmax."""
    return NetworkSpec((
        Conv2D(4, 3, 1), ReLU(), MaxPool2D(2),
        Conv2D(8, 3, 1), ReLU(), MaxPool2D(2),
        GlobalAvgPool(), Dense(2), Softmax(),
    ))


# ---------------------------------------------------------------------------
# Weights
# ---------------------------------------------------------------------------


@dataclass
class LayerParams:
    index: int
    kernel: np.ndarray
    bias: np.ndarray


@dataclass
class WeightSet:
    entries: list = field(default_factory=list)

    def arrays(self):
        """Flat list ``[kernel0, bias0, kernel1, bias1, ...]`` (views, not copies)."""
        out = []
        for e in self.entries:
            out.extend((e.kernel, e.bias))
        return out

    @classmethod
    def from_arrays(cls, template, arrays):
        it = iter(arrays)
        return cls([LayerParams(e.index, next(it), next(it)) for e in template.entries])

    def map(self, fn):
        return WeightSet.from_arrays(self, [fn(a) for a in self.arrays()])

    def copy(self):
        return self.map(np.copy)

    def flatten(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    @property
    def n_params(self):
        return sum(a.size for a in self.arrays())

    def same_shape(self, other):
        return (len(self.entries) == len(other.entries)
                and all(a.index == b.index and a.kernel.shape == b.kernel.shape
                        and a.bias.shape == b.bias.shape
                        for a, b in zip(self.entries, other.entries)))

    def equal(self, other):
        """Bitwise equality of every parameter."""
        return self.same_shape(other) and all(
            np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))


def check_weights(spec, weights):
    expected = spec.param_shapes()
    got = [(e.index, e.kernel.shape, e.bias.shape) for e in weights.entries]
    if got != [(i, tuple(k), tuple(b)) for i, k, b in expected]:
        raise ShapeError(f"weights {got} do not match network parameters {expected}")
    for a in weights.arrays():
        if not np.all(np.isfinite(a)):
            raise ValueError("weights contain non-finite values")


def zeros_like_spec(spec):
    return WeightSet([LayerParams(i, np.zeros(k), np.zeros(b)) for i, k, b in spec.param_shapes()])


def _fmt(x):
    return format(float(x), ".17g")


def weights_to_json(weights, spec):
    """Serialize with 17 significant digits so every float round-trips."""
    layers = []
    for e in weights.entries:
        layers.append(
            '{"index": %d, "kernel_shape": %s, "kernel": [%s], "bias_shape": %s, "bias": [%s]}' % (
                e.index, json.dumps(list(e.kernel.shape)), ", ".join(map(_fmt, e.kernel.ravel())),
                json.dumps(list(e.bias.shape)), ", ".join(map(_fmt, e.bias.ravel()))))
    return '{"spec_hash": %s, "layers": [\n%s\n]}\n' % (json.dumps(spec.spec_hash()), ",\n".join(layers))


def weights_from_json(text, spec=None):
    d = json.loads(text)
    if spec is not None and d["spec_hash"] != spec.spec_hash():
        raise ShapeError(f"weight file is for network {d['spec_hash']}, not {spec.spec_hash()}")
    ws = WeightSet([
        LayerParams(layer["index"],
                    np.array(layer["kernel"], dtype=np.float64).reshape(layer["kernel_shape"]),
                    np.array(layer["bias"], dtype=np.float64).reshape(layer["bias_shape"]))
        for layer in d["layers"]
    ])
    if spec is not None:
        check_weights(spec, ws)
    return ws


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


def stable_softmax(z, scale=1.0):
    """Row-wise ``softmax(scale * z)`` with max subtraction."""
    s = z * scale
    s = s - s.max(axis=1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=1, keepdims=True)


def _as_batch(spec, batch):
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 3 and spec.input_shape[0] == 1:
        x = x[:, None, :, :]
    if x.ndim != 4 or x.shape[1:] != spec.input_shape:
        raise ShapeError(f"batch shape {np.shape(batch)} does not match input shape (N, {spec.input_shape})")
    return np.ascontiguousarray(x)


def _run(spec, weights, x, upto=None, keep=False):
    params = {e.index: e for e in weights.entries}
    caches = []
    stop = len(spec.layers) if upto is None else upto
    for i, layer in enumerate(spec.layers[:stop]):
        inp = x
        if isinstance(layer, Conv2D):
            p = params[i]
            x = kernels.conv2d_forward(x, p.kernel, p.bias, layer.stride, layer.kernel_size // 2)
            cache = inp
        elif isinstance(layer, ReLU):
            x = np.maximum(x, 0.0)
            cache = x
        elif isinstance(layer, MaxPool2D):
            x, arg = kernels.maxpool_forward(x, layer.size)
            cache = (arg, inp.shape)
        elif isinstance(layer, GlobalAvgPool):
            cache = inp.shape
            x = x.mean(axis=(2, 3))
        elif isinstance(layer, Dense):
            p = params[i]
            x = x @ p.kernel + p.bias
            cache = inp
        else:  # Softmax
            x = stable_softmax(x)
            cache = None
        if keep:
            caches.append(cache)
    return x, caches


def forward(spec, weights, batch):
    """Per-sample class probabilities, shape ``(N, 2)``."""
    check_weights(spec, weights)
    x, _ = _run(spec, weights, _as_batch(spec, batch))
    return x


def features(spec, weights, batch):
    """Global-average-pooled backbone features, shape ``(N, feature_dim)``."""
    check_weights(spec, weights)
    x, _ = _run(spec, weights, _as_batch(spec, batch), upto=spec.gap_index + 1)
    return x


def _check_labels(labels, n):
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != (n, 2):
        raise ShapeError(f"labels must have shape ({n}, 2), got {y.shape}")
    if not (np.all((y == 0) | (y == 1)) and np.all(y.sum(axis=1) == 1)):
        raise ValueError("labels must be one-hot rows")
    return y


def one_hot(labels):
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, 2))
    out[np.arange(labels.size), labels] = 1.0
    return out


def cross_entropy(probs, y):
    p = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-(y * np.log(p)).sum(axis=1).mean())


def softmax_ce_grad(probs, y):
    """Gradient of the mean clamped cross-entropy with respect to the logits."""
    p_true = (probs * y).sum(axis=1, keepdims=True)
    live = (p_true >= PROB_CLAMP) & (p_true <= 1.0 - PROB_CLAMP)
    return np.where(live, probs - y, 0.0) / probs.shape[0]


def loss_and_gradients(spec, weights, batch, labels):
    """Mean categorical cross-entropy and its gradient for every parameter."""
    check_weights(spec, weights)
    x = _as_batch(spec, batch)
    y = _check_labels(labels, x.shape[0])
    return _loss_and_gradients(spec, weights, x, y)


def _loss_and_gradients(spec, weights, x, y):
    probs, caches = _run(spec, weights, x, keep=True)
    loss = cross_entropy(probs, y)
    params = {e.index: e for e in weights.entries}
    grads = {}
    d = softmax_ce_grad(probs, y)
    first_param = min(params)
    for i in range(len(spec.layers) - 2, -1, -1):  # softmax handled above
        layer, cache = spec.layers[i], caches[i]
        if isinstance(layer, Dense):
            grads[i] = (cache.T @ d, d.sum(axis=0))
            d = d @ params[i].kernel.T
        elif isinstance(layer, GlobalAvgPool):
            n, c, h, w = cache
            d = np.broadcast_to((d / (h * w))[:, :, None, None], cache).copy()
        elif isinstance(layer, MaxPool2D):
            arg, shp = cache
            d = kernels.maxpool_backward(np.ascontiguousarray(d), arg, layer.size, shp[2], shp[3])
        elif isinstance(layer, ReLU):
            d = d * (cache > 0)
        elif isinstance(layer, Conv2D):
            dx, dw, db = kernels.conv2d_backward(
                cache, params[i].kernel, np.ascontiguousarray(d), layer.stride,
                layer.kernel_size // 2, i != first_param)
            grads[i] = (dw, db)
            d = dx
            if i == first_param:
                break
    out = WeightSet([LayerParams(e.index, *grads[e.index]) for e in weights.entries])
    return loss, out


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 64
    max_epochs: int = 30
    patience: int = 5
    rng_seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 0:
            raise ValueError("batch_size and max_epochs must be >= 1, patience >= 0")


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros(cls, arrays):
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], 0)


def adam_update(params, grads, state, config):
    """Bias-corrected Adam on parallel lists of arrays; returns new lists."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("parameter, gradient and moment lists differ in length")
    b1, b2, eps = config.adam_beta1, config.adam_beta2, config.adam_epsilon
    t = state.t + 1
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"shape mismatch {p.shape} / {g.shape} / {m.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        new_p.append(p - config.learning_rate * (m / c1) / (np.sqrt(v / c2) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(new_m, new_v, t)


def adam_step(weights, grads, state, config):
    if not weights.same_shape(grads):
        raise ShapeError("gradients do not match weights")
    new, state = adam_update(weights.arrays(), grads.arrays(), state, config)
    return WeightSet.from_arrays(weights, new), state


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class Dataset:
    """Images ``(N, H, W)`` or ``(N, C, H, W)`` with integer labels in {0, 1}."""

    images: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.labels)


@dataclass
class Checkpoint:
    weights: WeightSet
    val_loss: float
    epoch: int
    threshold: float = 0.5


@dataclass
class TrainResult:
    best: Checkpoint
    history: list  # [(train_loss, val_loss), ...] per epoch
    wall_seconds: float
    epochs_to_best: int
    steps: int = 0


def epochs_to_target(history, target):
    """First epoch (1-based) whose validation loss is <= target, else ``None``."""
    for epoch, (_, val) in enumerate(history, start=1):
        if val <= target:
            return epoch
    return None


def fit(params, batch_loss_grad, val_loss, n_train, config, label="model"):
    """Generic Adam loop with per-epoch seeded shuffles and best-val checkpointing.

    ``batch_loss_grad(params, idx)`` returns ``(loss, grads)`` on the training
    rows ``idx``; ``val_loss(params)`` scores the full validation set.
    Returns ``(best_params, best_val, best_epoch, history, steps)``.
    """
    state = AdamState.zeros(params)
    best = (list(params), math.inf, 0)
    history = []
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        order = np.random.default_rng([config.rng_seed, epoch]).permutation(n_train)
        total = 0.0
        for start in range(0, n_train, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = batch_loss_grad(params, idx)
            if not math.isfinite(loss):
                raise TrainingDiverged(
                    f"{label}: non-finite training loss at epoch {epoch}, step {state.t + 1}")
            total += loss * len(idx)
            params, state = adam_update(params, grads, state, config)
        vl = float(val_loss(params))
        if not math.isfinite(vl):
            raise TrainingDiverged(f"{label}: non-finite validation loss at epoch {epoch}")
        history.append((total / n_train, vl))
        if vl < best[1]:
            best = (params, vl, epoch)
            stale = 0
        else:
            stale += 1
            if stale > config.patience:
                break
    return best[0], best[1], best[2], history, state.t


def train(spec, init, train_set, val_set, config):
    """Train from ``init``; the returned checkpoint has the lowest validation loss."""
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("training and validation sets must be non-empty")
    check_weights(spec, init)
    xt, yt = _as_batch(spec, train_set.images), one_hot(train_set.labels)
    xv, yv = _as_batch(spec, val_set.images), one_hot(val_set.labels)

    def batch_loss_grad(params, idx):
        ws = WeightSet.from_arrays(init, params)
        loss, g = _loss_and_gradients(spec, ws, np.ascontiguousarray(xt[idx]), yt[idx])
        return loss, g.arrays()

    def val_loss(params):
        probs, _ = _run(spec, WeightSet.from_arrays(init, params), xv)
        return cross_entropy(probs, yv)

    t0 = time.perf_counter()
    params, vl, epoch, history, steps = fit(
        [a.copy() for a in init.arrays()], batch_loss_grad, val_loss, len(train_set), config)
    wall = time.perf_counter() - t0
    best = Checkpoint(WeightSet.from_arrays(init, params), vl, epoch)
    return TrainResult(best, history, wall, epoch, steps)


def with_threshold(checkpoint, threshold):
    return replace(checkpoint, threshold=float(threshold))


def predict_scores(spec, weights, images, batch_size=512):
    """Positive-class probabilities in fixed-size chunks."""
    x = _as_batch(spec, images)
    check_weights(spec, weights)
    out = [_run(spec, weights, x[i:i + batch_size])[0][:, 1] for i in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.zeros(0)


__all__ = [
    "Conv2D", "ReLU", "MaxPool2D", "GlobalAvgPool", "Dense", "Softmax", "NetworkSpec",
    "default_spec", "LayerParams", "WeightSet", "check_weights", "weights_to_json",
    "weights_from_json", "forward", "features", "loss_and_gradients", "one_hot",
    "TrainConfig", "AdamState", "adam_step", "adam_update", "Dataset", "Checkpoint",
    "TrainResult", "train", "fit", "epochs_to_target", "with_threshold", "predict_scores",
    "stable_softmax", "ShapeError", "TrainingDiverged",
]
