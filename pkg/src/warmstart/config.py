"""Protocol configuration and its INI-style text format.

Example (every key optional; shown with defaults)::

    [protocol]
    seeds = 0 1 2 3 4 5 6 7 8 9
    convergence_target = 0.62

    [data]
    n_internal = 2000
    n_external = 500
    n_pretext = 4000
    pretext_seed = 20231

    [train]
    learning_rate = 0.001
    batch_size = 64
    max_epochs = 30
    patience = 5

    [pretrain]
    max_epochs = 100
    patience = 100

    [search]
    n_calls = 100
    n_random_starts = 30
    lower = 0.1
    upper = 0.9
    beta_scale = 0.01
    finetune_epochs = 1

    [ensemble]
    restarts = 100
    maxfev = 12
    head_epochs = 30
    head_patience = 5
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields, replace

from .gp import BOConfig
from .nn import TrainConfig


@dataclass(frozen=True)
class DataSettings:
    n_internal: int = 2000
    n_external: int = 500
    n_pretext: int = 4000
    pretext_seed: int = 20231


@dataclass(frozen=True)
class SearchSettings:
    n_calls: int = 100
    n_random_starts: int = 30
    lower: float = 0.1
    upper: float = 0.9
    beta_scale: float = 0.01
    finetune_epochs: int = 1

    def bo_config(self, seed):
        return BOConfig(lower=self.lower, upper=self.upper, n_calls=self.n_calls,
                        n_random_starts=self.n_random_starts, seed=seed)


@dataclass(frozen=True)
class EnsembleSettings:
    restarts: int = 100
    maxfev: int = 12
    head_epochs: int = 30
    head_patience: int = 5


@dataclass(frozen=True)
class ProtocolConfig:
    seeds: tuple = tuple(range(10))
    # validation cross-entropy used for epochs-to-target; frozen from the 10-seed default run
    convergence_target: float = 0.62
    data: DataSettings = field(default_factory=DataSettings)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(max_epochs=30, patience=5))
    pretrain: TrainConfig = field(default_factory=lambda: TrainConfig(max_epochs=100, patience=100))
    search: SearchSettings = field(default_factory=SearchSettings)
    ensemble: EnsembleSettings = field(default_factory=EnsembleSettings)

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.ensemble.restarts < 1:
            raise ValueError("ensemble restarts must be positive")
        self.search.bo_config(0)  # validates bounds and call counts

    def train_config(self, seed):
        return replace(self.train, rng_seed=seed)

    def head_config(self, seed):
        return replace(self.train, rng_seed=seed, max_epochs=self.ensemble.head_epochs,
                       patience=self.ensemble.head_patience)

    def to_ini(self):
        cp = configparser.ConfigParser()
        cp["protocol"] = {"seeds": " ".join(str(s) for s in self.seeds),
                          "convergence_target": repr(self.convergence_target)}
        cp["data"] = _section(self.data)
        cp["train"] = _train_section(self.train)
        cp["pretrain"] = _train_section(self.pretrain)
        cp["search"] = _section(self.search)
        cp["ensemble"] = _section(self.ensemble)
        lines = []
        for name in cp.sections():
            lines.append(f"[{name}]")
            lines.extend(f"{k} = {v}" for k, v in cp[name].items())
            lines.append("")
        return "\n".join(lines)

    def config_hash(self):
        return hashlib.sha256(self.to_ini().encode()).hexdigest()[:16]


_TRAIN_KEYS = ("learning_rate", "batch_size", "max_epochs", "patience",
               "adam_beta1", "adam_beta2", "adam_epsilon")


def _section(obj):
    return {f.name: repr(getattr(obj, f.name)) for f in fields(obj)}


def _train_section(tc):
    return {k: repr(getattr(tc, k)) for k in _TRAIN_KEYS}


def _typed(cls, section, base):
    kwargs = {}
    for f in fields(cls):
        if f.name in section:
            kind = type(getattr(base, f.name))
            kwargs[f.name] = kind(section[f.name]) if kind is not int else int(section[f.name])
    unknown = set(section) - {f.name for f in fields(cls)}
    if unknown:
        raise ValueError(f"unknown keys in [{section.name}]: {sorted(unknown)}")
    return replace(base, **kwargs)


def _typed_train(section, base):
    unknown = set(section) - set(_TRAIN_KEYS)
    if unknown:
        raise ValueError(f"unknown keys in [{section.name}]: {sorted(unknown)}")
    kwargs = {}
    for k in _TRAIN_KEYS:
        if k in section:
            kwargs[k] = int(section[k]) if k in ("batch_size", "max_epochs", "patience") else float(section[k])
    return replace(base, **kwargs)


def parse_config(text):
    cp = configparser.ConfigParser()
    cp.read_string(text)
    base = ProtocolConfig()
    known = {"protocol", "data", "train", "pretrain", "search", "ensemble"}
    extra = set(cp.sections()) - known
    if extra:
        raise ValueError(f"unknown config sections: {sorted(extra)}")
    kw = {}
    if cp.has_section("protocol"):
        sec = cp["protocol"]
        unknown = set(sec) - {"seeds", "convergence_target"}
        if unknown:
            raise ValueError(f"unknown keys in [protocol]: {sorted(unknown)}")
        if "seeds" in sec:
            kw["seeds"] = tuple(int(s) for s in sec["seeds"].replace(",", " ").split())
        if "convergence_target" in sec:
            kw["convergence_target"] = float(sec["convergence_target"])
    if cp.has_section("data"):
        kw["data"] = _typed(DataSettings, cp["data"], base.data)
    if cp.has_section("train"):
        kw["train"] = _typed_train(cp["train"], base.train)
    if cp.has_section("pretrain"):
        kw["pretrain"] = _typed_train(cp["pretrain"], base.pretrain)
    if cp.has_section("search"):
        kw["search"] = _typed(SearchSettings, cp["search"], base.search)
    if cp.has_section("ensemble"):
        kw["ensemble"] = _typed(EnsembleSettings, cp["ensemble"], base.ensemble)
    return replace(base, **kw)


def load_config(path=None):
    if path is None:
        return ProtocolConfig()
    with open(path) as fh:
        return parse_config(fh.read())
