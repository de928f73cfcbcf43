"""Optimal projections for Naive Bayes classification, with baselines and a benchmark harness."""

__version__ = "0.1.0"

from .data import Dataset, class_priors, make_dataset, validate  # noqa: E402
from .fastkernel import KernelSpec  # noqa: E402
from .opnb import OPNBConfig, TrainedOPNBModel, fit, posterior, predict  # noqa: E402

__all__ = [
    "Dataset",
    "KernelSpec",
    "OPNBConfig",
    "TrainedOPNBModel",
    "class_priors",
    "fit",
    "make_dataset",
    "posterior",
    "predict",
    "validate",
]
