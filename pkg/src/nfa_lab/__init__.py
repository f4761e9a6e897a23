"""Numerical laboratory for feature/gradient alignment in small MLPs.

Modules:
    linalg    seeded RNG helpers, symmetric eigen/SVD wrappers, CSV/JSON io
    network   bias-free scalar-output MLPs with explicit forward/backward
    datasets  synthetic tasks (chain polynomial, decaying spectra, the
              alignment-reversing balance construction)
    metrics   alignment correlations (uncentered/centered/double-centered)
    theory    early-training predictions: derivative Grams, free-probability
              closed forms, Monte-Carlo oracles
    optim     GD and speed-limited training loops with measurement logging
    presets   figure-by-figure experiment configurations and artifact runners
    cli       `nfa-lab` command-line front end
"""

__version__ = "0.1.0"

from . import datasets, linalg, metrics, network, optim, presets, theory
from .datasets import Dataset
from .metrics import NfaSnapshot, ReferenceState, pearson_rho, rho
from .network import Mlp, MlpConfig, backward, forward, init_mlp
from .optim import OptimizerSpec, TrainLog, train

__all__ = [
    "__version__",
    "datasets",
    "linalg",
    "metrics",
    "network",
    "optim",
    "presets",
    "theory",
    "Dataset",
    "NfaSnapshot",
    "ReferenceState",
    "pearson_rho",
    "rho",
    "Mlp",
    "MlpConfig",
    "backward",
    "forward",
    "init_mlp",
    "OptimizerSpec",
    "TrainLog",
    "train",
]
