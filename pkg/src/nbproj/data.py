"""Labeled datasets, class bookkeeping and CSV ingestion."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import pandas as pd

from .exceptions import DataError, DimensionMismatch, EmptyClass, NonFiniteEntry

CONTINUOUS = "continuous"
BINARY = "binary"


@dataclass(frozen=True)
class Dataset:
    """Numeric covariates with integer class labels.

    Labels are stored as contiguous integers ``1..K``; ``label_names`` maps
    class ``k`` back to the original label at position ``k - 1``.
    """

    X: np.ndarray
    y: np.ndarray
    column_kind: tuple[str, ...] = ()
    column_names: tuple[str, ...] = ()
    label_names: tuple = ()
    name: str = ""

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", np.asarray(self.y))
        p = X.shape[1]
        if not self.column_kind:
            object.__setattr__(self, "column_kind", (CONTINUOUS,) * p)
        if not self.column_names:
            object.__setattr__(self, "column_names", tuple(f"x{j}" for j in range(p)))
        self.X.setflags(write=False)
        self.y.setflags(write=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.y.max()) if self.y.size else 0

    @property
    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y.astype(int), minlength=self.n_classes + 1)[1:]

    @property
    def binary_mask(self) -> np.ndarray:
        return np.array([k == BINARY for k in self.column_kind], dtype=bool)

    def subset(self, index) -> "Dataset":
        """Rows ``index`` of this dataset, keeping the class coding intact."""
        return replace(self, X=self.X[index], y=self.y[index])


def relabel(y: Sequence) -> tuple[np.ndarray, tuple]:
    """Map arbitrary labels to ``1..K`` in order of first appearance."""
    y = np.asarray(y)
    _, first = np.unique(y, return_index=True)
    order = y[np.sort(first)]
    lookup = {v.item() if hasattr(v, "item") else v: k + 1 for k, v in enumerate(order)}
    codes = np.array([lookup[v.item() if hasattr(v, "item") else v] for v in y], dtype=np.int64)
    names = tuple(v.item() if hasattr(v, "item") else v for v in order)
    return codes, names


def validate(dataset: Dataset) -> Dataset:
    """Check the dataset invariants and return a copy with labels ``1..K``.

    Raises
    ------
    DimensionMismatch
        If the number of labels differs from the number of rows of ``X``.
    NonFiniteEntry
        If ``X`` contains NaN or infinite values.
    EmptyClass
        If the dataset has no observations.
    """
    X, y = dataset.X, dataset.y
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"{y.shape[0]} labels for {X.shape[0]} rows")
    if not np.all(np.isfinite(X)):
        raise NonFiniteEntry("X contains NaN or infinite entries")
    if y.shape[0] == 0:
        raise EmptyClass("dataset has no observations")
    if len(dataset.column_kind) != X.shape[1]:
        raise DimensionMismatch("column_kind length does not match the number of columns")

    already_coded = (
        np.issubdtype(y.dtype, np.integer)
        and y.min() == 1
        and np.array_equal(np.unique(y), np.arange(1, y.max() + 1))
        and _first_appearance_sorted(y)
    )
    if already_coded:
        return dataset
    codes, names = relabel(y)
    if dataset.label_names:
        names = tuple(dataset.label_names[int(v) - 1] for v in names)
    return replace(dataset, y=codes, label_names=names)


def _first_appearance_sorted(y: np.ndarray) -> bool:
    _, first = np.unique(y, return_index=True)
    return bool(np.all(np.diff(first) > 0))


def make_dataset(X, y, column_kind=None, column_names=None, name="") -> Dataset:
    """Build and validate a dataset from raw arrays."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    ds = Dataset(
        X=X,
        y=np.asarray(y),
        column_kind=tuple(column_kind) if column_kind is not None else (),
        column_names=tuple(column_names) if column_names is not None else (),
        name=name,
    )
    return validate(ds)


def class_priors(dataset: Dataset) -> np.ndarray:
    """Empirical class proportions ``n_k / n``."""
    counts = dataset.class_counts
    return counts / counts.sum()


def read_table(
    path,
    label_col: str | int,
    header: bool = True,
    delimiter: str = ",",
) -> tuple[pd.DataFrame, pd.Series]:
    """Read a CSV into a covariate frame and a label series.

    ``label_col`` is a column name, or a (possibly negative) integer position.
    Without a header, columns are named ``c0, c1, ...``.
    """
    try:
        frame = pd.read_csv(
            path,
            sep=delimiter,
            header=0 if header else None,
            skipinitialspace=True,
            float_precision="round_trip",
        )
    except pd.errors.ParserError as exc:
        raise DataError(f"could not parse {path}: {exc}") from exc
    except pd.errors.EmptyDataError as exc:
        raise DataError(f"{path} is empty") from exc
    if not header:
        frame.columns = [f"c{j}" for j in range(frame.shape[1])]
    frame.columns = [str(c) for c in frame.columns]
    label_name = _resolve_column(frame, label_col)
    labels = frame[label_name]
    return frame.drop(columns=[label_name]), labels


def _resolve_column(frame: pd.DataFrame, label_col) -> str:
    if isinstance(label_col, str) and label_col in frame.columns:
        return label_col
    try:
        idx = int(label_col)
    except (TypeError, ValueError):
        raise DataError(f"label column {label_col!r} not found") from None
    if not -frame.shape[1] <= idx < frame.shape[1]:
        raise DataError(f"label column {label_col!r} not found")
    return frame.columns[idx]


def read_numeric_csv(path, label_col: str | int = "target", header: bool = True,
                     delimiter: str = ",", kinds: Sequence[str] | None = None) -> Dataset:
    """Read an already numeric CSV (e.g. a preprocessed file) as a Dataset."""
    covariates, labels = read_table(path, label_col, header=header, delimiter=delimiter)
    bad = [c for c in covariates.columns if not pd.api.types.is_numeric_dtype(covariates[c])]
    if bad:
        raise DataError(f"non-numeric columns {bad} in {path}")
    return make_dataset(
        covariates.to_numpy(dtype=float),
        labels.to_numpy(),
        column_kind=kinds,
        column_names=list(covariates.columns),
        name=str(path),
    )

