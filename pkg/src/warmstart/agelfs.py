"""Attention-guided ensemble head with a learnable fuzzy softmax.

Frozen constituent backbones produce pooled features ``h`` that are
concatenated and passed through a trainable head::

    a = softmax(h @ A + b)        # attention gate over feature positions
    g = a * h
    z = g @ W + c                 # two logits
    p = softmax(fuzziness * z)    # fuzzy softmax

Fuzziness is stored as ``raw`` with ``fuzziness = exp(raw)``, floored at
``FUZZINESS_FLOOR`` during training.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass

import numpy as np

from . import nn

FUZZINESS_FLOOR = 1e-3
_RAW_FLOOR = math.log(FUZZINESS_FLOOR)


def fuzzy_softmax(logits, fuzziness):
    """``exp(fuzziness * x_i) / sum_j exp(fuzziness * x_j)`` along the last axis."""
    if not fuzziness > 0:
        raise ValueError(f"fuzziness must be positive, got {fuzziness}")
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("logits must be finite")
    if z.ndim == 1:
        return nn.stable_softmax(z[None, :], fuzziness)[0]
    return nn.stable_softmax(z, fuzziness)


@dataclass
class AgelfsSpec:
    constituents: list  # [(NetworkSpec, WeightSet), ...]
    fuzziness_init: float = 1.0
    head_seed: int = 0

    def __post_init__(self):
        if len(self.constituents) < 2:
            raise ValueError("an attention ensemble needs at least 2 constituents")
        geom = {spec.input_shape for spec, _ in self.constituents}
        if len(geom) != 1:
            raise nn.ShapeError(f"constituents disagree on input geometry: {sorted(geom)}")
        for spec, weights in self.constituents:
            nn.check_weights(spec, weights)
        if not self.fuzziness_init > 0:
            raise ValueError("fuzziness_init must be positive")

    @property
    def input_shape(self):
        return self.constituents[0][0].input_shape

    @property
    def attention_dim(self):
        return sum(spec.feature_dim for spec, _ in self.constituents)


@dataclass
class AgelfsModel:
    spec: AgelfsSpec
    attention: tuple  # (A (D, D), b (D,))
    dense: tuple      # (W (D, 2), c (2,))
    raw_fuzziness: float

    @property
    def fuzziness(self):
        return math.exp(max(self.raw_fuzziness, _RAW_FLOOR))

    def params(self):
        return [self.attention[0], self.attention[1], self.dense[0], self.dense[1],
                np.array(self.raw_fuzziness)]

    @classmethod
    def from_params(cls, spec, params):
        A, b, W, c, raw = params
        return cls(spec, (A, b), (W, c), float(raw))


def init_head(spec):
    """Glorot-uniform attention and dense matrices, zero biases, ``fuzziness_init``."""
    d = spec.attention_dim
    rng = np.random.default_rng([spec.head_seed, 0xA77E])
    lim_a = math.sqrt(6.0 / (d + d))
    lim_w = math.sqrt(6.0 / (d + 2))
    A = rng.uniform(-lim_a, lim_a, size=(d, d))
    W = rng.uniform(-lim_w, lim_w, size=(d, 2))
    return AgelfsModel(spec, (A, np.zeros(d)), (W, np.zeros(2)), math.log(spec.fuzziness_init))


def constituent_features(spec, batch):
    """Concatenated pooled features of all constituents, shape ``(N, D)``."""
    return np.concatenate([nn.features(s, w, batch) for s, w in spec.constituents], axis=1)


def _head_forward(params, h):
    A, b, W, c, raw = params
    f = math.exp(max(float(raw), _RAW_FLOOR))
    a = nn.stable_softmax(h @ A + b)
    g = a * h
    z = g @ W + c
    return nn.stable_softmax(z, f), (a, g, z, f)


def head_loss_and_gradients(params, h, y):
    """Mean clamped cross-entropy of the head and its gradients (same order as ``params``)."""
    A, b, W, c, raw = params
    probs, (a, g, z, f) = _head_forward(params, h)
    loss = nn.cross_entropy(probs, y)
    du = nn.softmax_ce_grad(probs, y)          # d loss / d (f * z)
    d_raw = float((du * z).sum()) * f if float(raw) >= _RAW_FLOOR else 0.0
    dz = f * du
    dW = g.T @ dz
    dc = dz.sum(axis=0)
    da = (dz @ W.T) * h
    ds = a * (da - (da * a).sum(axis=1, keepdims=True))
    dA = h.T @ ds
    db = ds.sum(axis=0)
    return loss, [dA, db, dW, dc, np.array(d_raw)]


def forward_agelfs(model, batch):
    """Class probabilities ``(N, 2)``; constituents are only read."""
    h = constituent_features(model.spec, batch)
    return _head_forward(model.params(), h)[0]


def train_agelfs(spec, train_set, val_set, config):
    """Fit the head on frozen features; returns ``(model, TrainResult)``.

    The checkpoint's ``weights`` hold the head as a two-entry WeightSet
    (attention, dense); fuzziness is on the returned model.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("training and validation sets must be non-empty")
    ht = constituent_features(spec, train_set.images)
    hv = constituent_features(spec, val_set.images)
    yt, yv = nn.one_hot(train_set.labels), nn.one_hot(val_set.labels)

    def batch_loss_grad(params, idx):
        return head_loss_and_gradients(params, ht[idx], yt[idx])

    def val_loss(params):
        return nn.cross_entropy(_head_forward(params, hv)[0], yv)

    t0 = time.perf_counter()
    init = init_head(spec)
    params, vl, epoch, history, steps = nn.fit(
        [np.array(p, dtype=np.float64) for p in init.params()], batch_loss_grad, val_loss,
        len(train_set), config, label="attention ensemble")
    wall = time.perf_counter() - t0
    model = AgelfsModel.from_params(spec, params)
    head = nn.WeightSet([nn.LayerParams(0, *model.attention), nn.LayerParams(1, *model.dense)])
    return model, nn.TrainResult(nn.Checkpoint(head, vl, epoch), history, wall, epoch, steps)


def model_to_json(model, constituent_paths):
    """Head arrays plus references to the constituents' weight files."""
    if len(constituent_paths) != len(model.spec.constituents):
        raise ValueError("one path per constituent is required")
    A, b = model.attention
    W, c = model.dense

    def arr(x):
        return [float(v) for v in np.ravel(x)]

    doc = {
        "constituents": [{"weights_path": str(p), "spec_hash": s.spec_hash()}
                         for p, (s, _) in zip(constituent_paths, model.spec.constituents)],
        "attention": {"shape": list(A.shape), "kernel": arr(A), "bias": arr(b)},
        "dense": {"shape": list(W.shape), "kernel": arr(W), "bias": arr(c)},
        "fuzziness": model.fuzziness,
        "raw_fuzziness": model.raw_fuzziness,
        "head_seed": model.spec.head_seed,
    }
    return json.dumps(doc, indent=1) + "\n"


def model_from_json(text, constituents):
    """Rebuild a model from :func:`model_to_json` output and loaded constituents."""
    d = json.loads(text)
    spec = AgelfsSpec(list(constituents), head_seed=d["head_seed"])
    A = np.array(d["attention"]["kernel"]).reshape(d["attention"]["shape"])
    W = np.array(d["dense"]["kernel"]).reshape(d["dense"]["shape"])
    return AgelfsModel(spec, (A, np.array(d["attention"]["bias"])),
                       (W, np.array(d["dense"]["bias"])), float(d["raw_fuzziness"]))
