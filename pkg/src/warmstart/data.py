"""Synthetic 16x16 "radiograph" cohorts with patient-level groups.

Every image is a fixed two-lobe lung-field template plus a patient-specific
low-frequency texture and pixel noise. Abnormal images additionally carry a
bright elliptical opacity inside one lung lobe. Shift parameters model
acquisition and population differences: ``contrast_gain`` scales intensities,
``structure_scale`` scales anatomy and opacity size, ``noise_level`` is the
pixel noise standard deviation.

Pixel values are quantized to multiples of 1/256, which keeps them exact in
JSON and mimics 8-bit acquisition.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

SIZE = 16
COHORT_TAGS = ("internal", "ext_adult", "ext_ped2", "ext_ped11", "ext_ped18", "pretext")


@dataclass(frozen=True)
class ShiftParams:
    contrast_gain: float = 1.0
    structure_scale: float = 1.0
    noise_level: float = 0.06


# Graded presets: ped2 is the strongest shift, ped18 the mildest; the adult
# external cohort differs in contrast only.
SHIFT_PRESETS = {
    "internal": ShiftParams(1.0, 1.0, 0.06),
    "ext_adult": ShiftParams(0.88, 1.0, 0.06),
    "ext_ped18": ShiftParams(1.12, 0.9, 0.07),
    "ext_ped11": ShiftParams(1.22, 0.78, 0.08),
    "ext_ped2": ShiftParams(1.32, 0.66, 0.09),
    "pretext": ShiftParams(1.0, 1.0, 0.06),
}

ABNORMAL_FRACTION = {
    "internal": 0.67,
    "ext_adult": 0.58,
    "ext_ped18": 0.42,
    "ext_ped11": 0.31,
    "ext_ped2": 0.37,
    "pretext": 0.5,
}


@dataclass(frozen=True)
class CohortConfig:
    n_samples: int
    abnormal_fraction: float
    shift: ShiftParams = field(default_factory=ShiftParams)
    groups: int = 100
    seed: int = 0
    tag: str = "internal"
    opacity_amplitude: tuple = (0.12, 0.26)
    rotate: bool = False

    def __post_init__(self):
        if not 0.0 < self.abnormal_fraction < 1.0:
            raise ValueError("abnormal_fraction must lie strictly between 0 and 1")
        if self.groups < 10:
            raise ValueError("need at least 10 groups")
        if self.n_samples < self.groups:
            raise ValueError("n_samples must be at least the number of groups")
        if self.tag not in COHORT_TAGS:
            raise ValueError(f"unknown cohort tag {self.tag!r}")

    def to_dict(self):
        d = asdict(self)
        d["opacity_amplitude"] = list(self.opacity_amplitude)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["shift"] = ShiftParams(**d["shift"])
        d["opacity_amplitude"] = tuple(d["opacity_amplitude"])
        return cls(**d)


def preset_config(tag, n_samples, seed, groups=None):
    """Cohort config for one of the named populations."""
    return CohortConfig(
        n_samples=n_samples,
        abnormal_fraction=ABNORMAL_FRACTION[tag],
        shift=SHIFT_PRESETS[tag],
        groups=groups if groups is not None else max(10, n_samples // 2),
        seed=seed,
        tag=tag,
    )


@dataclass
class Sample:
    image: np.ndarray
    label: int
    group_id: int
    cohort: str


@dataclass
class Cohort:
    """Column-oriented samples: ``images (N, 16, 16)``, ``labels``, ``group_ids``."""

    images: np.ndarray
    labels: np.ndarray
    group_ids: np.ndarray
    tag: str
    config: CohortConfig | None = None

    def __len__(self):
        return len(self.labels)

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.intp)
        return Cohort(self.images[idx], self.labels[idx], self.group_ids[idx], self.tag, self.config)

    def samples(self):
        for img, y, g in zip(self.images, self.labels, self.group_ids):
            yield Sample(img, int(y), int(g), self.tag)

    def dataset(self):
        from .nn import Dataset
        return Dataset(self.images, self.labels)


def _lung_template(scale):
    yy, xx = np.mgrid[0:SIZE, 0:SIZE] + 0.5
    c = SIZE / 2.0
    field_ = np.full((SIZE, SIZE), 0.55)
    for cx in (c - 3.6 * scale, c + 3.6 * scale):
        r = ((xx - cx) / (2.6 * scale)) ** 2 + ((yy - c) / (5.6 * scale)) ** 2
        field_ -= 0.10 * np.exp(-r ** 2)
    return field_


def _opacity(rng, scale, amplitude):
    yy, xx = np.mgrid[0:SIZE, 0:SIZE] + 0.5
    c = SIZE / 2.0
    side = rng.choice((-1.0, 1.0))
    cx = c + side * 3.6 * scale + rng.uniform(-1.2, 1.2) * scale
    cy = c + rng.uniform(-3.5, 3.5) * scale
    sx, sy = scale * rng.uniform(0.9, 1.9, size=2)
    th = rng.uniform(0.0, np.pi)
    dx, dy = xx - cx, yy - cy
    u = np.cos(th) * dx + np.sin(th) * dy
    v = -np.sin(th) * dx + np.cos(th) * dy
    return amplitude * np.exp(-0.5 * ((u / sx) ** 2 + (v / sy) ** 2))


def generate_cohort(config):
    """Deterministic in ``config.seed`` (and the cohort tag)."""
    tag_code = COHORT_TAGS.index(config.tag)
    rng = np.random.default_rng([config.seed, tag_code])
    n, k = config.n_samples, config.groups
    shift = config.shift
    group_ids = rng.permutation(np.arange(n) % k)
    # per-patient texture: a few low-frequency cosines
    freqs = rng.uniform(0.15, 0.6, size=(k, 3, 2))
    phases = rng.uniform(0, 2 * np.pi, size=(k, 3))
    amps = rng.uniform(0.01, 0.035, size=(k, 3))
    labels = (rng.random(n) < config.abnormal_fraction).astype(np.int64)
    base = _lung_template(shift.structure_scale)
    yy, xx = np.mgrid[0:SIZE, 0:SIZE].astype(np.float64)
    images = np.empty((n, SIZE, SIZE))
    lo, hi = config.opacity_amplitude
    for i in range(n):
        g = group_ids[i]
        img = base.copy()
        for j in range(3):
            img += amps[g, j] * np.cos(freqs[g, j, 0] * xx + freqs[g, j, 1] * yy + phases[g, j])
        if labels[i]:
            img += _opacity(rng, shift.structure_scale, rng.uniform(lo, hi))
        img += rng.normal(0.0, shift.noise_level, size=(SIZE, SIZE))
        img *= shift.contrast_gain
        if config.rotate:
            img = np.rot90(img)
        images[i] = img
    images = np.clip(np.round(images * 256.0) / 256.0, 0.0, 1.0)
    return Cohort(images, labels, group_ids.astype(np.int64), config.tag, config)


def generate_pretext(n_samples, seed):
    """Stand-in for a large generic pre-training corpus.

    Same image family, rotated a quarter turn, balanced classes and more
    conspicuous opacities than the clinical cohorts.
    """
    cfg = CohortConfig(
        n_samples=n_samples, abnormal_fraction=0.5, shift=SHIFT_PRESETS["pretext"],
        groups=max(10, n_samples // 2), seed=seed, tag="pretext",
        opacity_amplitude=(0.25, 0.45), rotate=True)
    return generate_cohort(cfg)


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------


def _assign_by_groups(cohort, group_order, cut_fractions):
    """Walk groups in order; a group goes to the first bucket whose cumulative
    cut its midpoint falls below."""
    sizes = {g: int(s) for g, s in zip(*np.unique(cohort.group_ids, return_counts=True))}
    total = len(cohort)
    cuts = np.cumsum(cut_fractions) * total
    bucket_of = {}
    acc = 0
    for g in group_order:
        mid = acc + sizes[g] / 2.0
        bucket_of[g] = int(np.searchsorted(cuts, mid, side="right"))
        acc += sizes[g]
    buckets = [[] for _ in range(len(cut_fractions) + 1)]
    for i, g in enumerate(cohort.group_ids):
        buckets[min(bucket_of[int(g)], len(cut_fractions))].append(i)
    return [cohort.subset(b) for b in buckets]


def split_group_level(cohort, fractions=(0.7, 0.1, 0.2)):
    """Patient-level 70/10/20 split; returns ``{"train", "val", "test"}``."""
    groups = np.unique(cohort.group_ids)
    if len(groups) < 10:
        raise ValueError(f"need at least 10 groups to split, got {len(groups)}")
    seed = cohort.config.seed if cohort.config is not None else 0
    order = np.random.default_rng([seed, 7919]).permutation(groups)
    train, val, test = _assign_by_groups(cohort, order, fractions[:2])
    return {"train": train, "val": val, "test": test}


def _first_half(part):
    order = list(dict.fromkeys(int(g) for g in part.group_ids))
    return _assign_by_groups(part, order, (0.5,))[0]


def halve_periodic(train, val):
    """``{"P": (train_half, val_half), "F": (train, val)}``; the halves hold the
    first half of each split's groups in order of appearance."""
    return {"P": (_first_half(train), _first_half(val)), "F": (train, val)}


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def write_jsonl(cohort, path):
    with open(path, "w") as fh:
        for s in cohort.samples():
            rows = ",".join("[" + ",".join(repr(float(v)) for v in row) + "]" for row in s.image)
            fh.write('{"image":[%s],"label":%d,"group_id":%d,"cohort":%s}\n'
                     % (rows, s.label, s.group_id, json.dumps(s.cohort)))
    manifest = {"tag": cohort.tag, "n_samples": len(cohort),
                "config": cohort.config.to_dict() if cohort.config else None}
    with open(str(path) + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_jsonl(path):
    images, labels, groups = [], [], []
    tag = None
    with open(path) as fh:
        for line in fh:
            d = json.loads(line)
            images.append(d["image"])
            labels.append(d["label"])
            groups.append(d["group_id"])
            tag = d["cohort"]
    config = None
    try:
        with open(str(path) + ".manifest.json") as fh:
            cfg = json.load(fh)["config"]
        config = CohortConfig.from_dict(cfg) if cfg else None
    except FileNotFoundError:
        pass
    return Cohort(np.array(images, dtype=np.float64).reshape(-1, SIZE, SIZE),
                  np.array(labels, dtype=np.int64), np.array(groups, dtype=np.int64), tag, config)
