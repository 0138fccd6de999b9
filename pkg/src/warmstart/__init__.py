"""Cold, warm and shrink-and-perturb initialization, Bayesian search for the
shrink factor, weight-level ensembles, and a metrics/significance pipeline
on synthetic distribution-shifted cohorts."""

from .kernels import BACKEND
from .nn import NetworkSpec, TrainConfig, WeightSet, default_spec, forward, train
from .init import ShrinkParams, cold_init, shrink_perturb, warm_init
from .ensembles import ewa, fslsqp, weighted_average
from .agelfs import fuzzy_softmax
from .config import ProtocolConfig, load_config

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "NetworkSpec", "TrainConfig", "WeightSet", "default_spec", "forward", "train",
    "ShrinkParams", "cold_init", "shrink_perturb", "warm_init", "ewa", "fslsqp",
    "weighted_average", "fuzzy_softmax", "ProtocolConfig", "load_config",
]
