"""Per-column scaling by training-set standard deviations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatch, ZeroStandardDeviation


@dataclass(frozen=True)
class ScalingParams:
    sd: np.ndarray


def fit_scaling(X) -> ScalingParams:
    """Column standard deviations (divisor n - 1) of the training data."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        raise ZeroStandardDeviation("need at least two rows to estimate a standard deviation")
    sd = X.std(axis=0, ddof=1)
    bad = np.flatnonzero(~(sd > 0))
    if bad.size:
        raise ZeroStandardDeviation(f"columns {bad.tolist()} have zero standard deviation")
    return ScalingParams(sd)


def apply_scaling(X, params: ScalingParams) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != params.sd.shape[0]:
        raise DimensionMismatch(
            f"expected {params.sd.shape[0]} columns, found {X.shape[-1] if X.ndim else 0}"
        )
    return X / params.sd
