"""Preprocessing policy, stratified sampling and data splits.

:func:`preprocess` applies, in order: stratified subsampling, removal of
small classes, removal of constant columns, one-hot encoding of low-
cardinality columns, a small Gaussian perturbation and, for very wide data,
reduction to leading principal components.  Scaling is not part of it; it
belongs to each training instance (see :mod:`nbproj.scaling`).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .data import BINARY, CONTINUOUS, Dataset, make_dataset, read_numeric_csv
from .exceptions import ClassTooSmall, EmptyTable, NoClassesRemain, TargetTooLarge
from .scaling import ScalingParams, apply_scaling, fit_scaling

__all__ = [
    "PreprocessConfig",
    "ScalingParams",
    "apply_scaling",
    "fit_scaling",
    "preprocess",
    "read_preprocessed",
    "stratified_kfold",
    "stratified_sample",
    "train_test_split",
    "write_preprocessed",
]

PREPROCESS_STEPS = (
    "stratified_subsample",
    "drop_small_classes",
    "drop_constant_columns",
    "one_hot_encode",
    "perturb",
    "pca_reduce",
)


@dataclass(frozen=True)
class PreprocessConfig:
    max_samples: int = 3000
    min_class_size: int = 10
    categorical_threshold: int = 5
    perturbation_fraction: float = 0.01
    max_dimensions: int = 300
    seed: int = 0


def _quotas(counts: np.ndarray, target: int) -> np.ndarray:
    """Largest-remainder apportionment of ``target`` over ``counts``."""
    exact = target * counts / counts.sum()
    base = np.floor(exact).astype(np.int64)
    short = target - int(base.sum())
    if short > 0:
        # Largest fractional parts first; ties go to the smaller class index.
        order = np.lexsort((np.arange(counts.size), -(exact - base)))
        base[order[:short]] += 1
    return base


def stratified_sample(y, target_n: int, seed=0) -> np.ndarray:
    """Sorted indices of a class-proportional sample of size ``target_n``."""
    y = np.asarray(y)
    n = y.shape[0]
    if target_n > n:
        raise TargetTooLarge(f"cannot draw {target_n} of {n} observations")
    if target_n == n:
        return np.arange(n)
    classes, codes = np.unique(y, return_inverse=True)
    counts = np.bincount(codes)
    quotas = _quotas(counts, target_n)
    rng = np.random.default_rng(seed)
    chosen = [rng.choice(np.flatnonzero(codes == c), size=q, replace=False)
              for c, q in enumerate(quotas)]
    return np.sort(np.concatenate(chosen))


def _split_index(y, train_fraction, seed):
    y = np.asarray(y)
    classes, codes = np.unique(y, return_inverse=True)
    counts = np.bincount(codes)
    if np.any(counts < 2):
        raise ClassTooSmall("every class needs at least two members to be split")
    quotas = _quotas(counts, int(round(train_fraction * y.shape[0])))
    # Keep every class on both sides of the split.
    quotas = np.clip(quotas, 1, counts - 1)
    rng = np.random.default_rng(seed)
    train = [rng.choice(np.flatnonzero(codes == c), size=q, replace=False)
             for c, q in enumerate(quotas)]
    train = np.sort(np.concatenate(train))
    test = np.setdiff1d(np.arange(y.shape[0]), train)
    return train, test


def train_test_split(dataset: Dataset, train_fraction: float = 0.75, seed=0):
    """Stratified split; returns ``(train, test, train_index, test_index)``."""
    train, test = _split_index(dataset.y, train_fraction, seed)
    return dataset.subset(train), dataset.subset(test), train, test


def stratified_kfold(y, folds: int = 5, seed=0) -> np.ndarray:
    """Fold id in ``0..folds-1`` per observation.

    Within each class, indices are shuffled and dealt round robin; the deal
    continues across classes so overall fold sizes stay balanced too.
    """
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    out = np.empty(y.shape[0], dtype=np.int64)
    offset = 0
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        out[idx] = (offset + np.arange(idx.size)) % folds
        offset = (offset + idx.size) % folds
    return out


# ---------------------------------------------------------------------------
# Preprocessing policy
# ---------------------------------------------------------------------------


def _is_constant(col: pd.Series) -> bool:
    if pd.api.types.is_numeric_dtype(col):
        values = col.to_numpy(dtype=float)
        return values.size < 2 or not values.std(ddof=1) > 0
    return col.nunique(dropna=False) < 2


def _sort_key(v):
    return (0, float(v), "") if isinstance(v, (int, float, np.number)) else (1, 0.0, str(v))


def preprocess(covariates: pd.DataFrame, labels, cfg: PreprocessConfig = PreprocessConfig(),
               name: str = "") -> tuple[Dataset, dict]:
    """Apply the preprocessing policy; returns the dataset and a step report."""
    if covariates.shape[0] == 0 or covariates.shape[1] == 0:
        raise EmptyTable("table has no rows or no covariate columns")
    covariates = covariates.reset_index(drop=True)
    labels = pd.Series(np.asarray(labels)).reset_index(drop=True)
    sample_seed, noise_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    report = {"seed": cfg.seed, "config": asdict(cfg), "steps": [],
              "n_input": int(covariates.shape[0]), "p_input": int(covariates.shape[1])}

    # 1. stratified subsample
    n = covariates.shape[0]
    if n > cfg.max_samples:
        keep = stratified_sample(labels.to_numpy(), cfg.max_samples, sample_seed)
        covariates, labels = covariates.iloc[keep].reset_index(drop=True), labels.iloc[keep].reset_index(drop=True)
    report["steps"].append({"step": PREPROCESS_STEPS[0], "applied": bool(n > cfg.max_samples),
                            "n_after": int(covariates.shape[0])})

    # 2. drop small classes
    counts = labels.value_counts()
    small = counts[counts < cfg.min_class_size].index.tolist()
    mask = ~labels.isin(small).to_numpy()
    covariates, labels = covariates[mask].reset_index(drop=True), labels[mask].reset_index(drop=True)
    if labels.size == 0:
        raise NoClassesRemain(f"no class has at least {cfg.min_class_size} observations")
    report["steps"].append({"step": PREPROCESS_STEPS[1], "dropped_classes": [_plain(c) for c in small],
                            "n_after": int(labels.size)})

    # 3. drop zero-variance columns
    constant = [c for c in covariates.columns if _is_constant(covariates[c])]
    covariates = covariates.drop(columns=constant)
    report["steps"].append({"step": PREPROCESS_STEPS[2], "dropped_columns": constant})
    if covariates.shape[1] == 0:
        raise EmptyTable("all covariate columns are constant")

    # 4. one-hot encoding of categorical columns (G - 1 indicators, first sorted level dropped)
    blocks, kinds, names, ohe = [], [], [], {}
    for c in covariates.columns:
        col = covariates[c]
        levels = col.unique().tolist()
        categorical = (not pd.api.types.is_numeric_dtype(col)) or len(levels) <= cfg.categorical_threshold
        if not categorical:
            blocks.append(col.to_numpy(dtype=float)[:, None])
            kinds.append(CONTINUOUS)
            names.append(c)
            continue
        levels = sorted(levels, key=_sort_key)
        ohe[c] = {"levels": [_plain(v) for v in levels], "dropped": _plain(levels[0])}
        for v in levels[1:]:
            blocks.append((col == v).to_numpy(dtype=float)[:, None])
            kinds.append(BINARY)
            names.append(f"{c}={_plain(v)}")
    X = np.hstack(blocks)
    report["steps"].append({"step": PREPROCESS_STEPS[3], "encoded": ohe, "p_after": int(X.shape[1])})

    # 5. Gaussian perturbation, sd = fraction * column sd
    rng = np.random.default_rng(noise_seed)
    sd = X.std(axis=0, ddof=1)
    X = X + rng.standard_normal(X.shape) * (cfg.perturbation_fraction * sd)
    report["steps"].append({"step": PREPROCESS_STEPS[4], "fraction": cfg.perturbation_fraction})

    # 6. principal components for wide data
    reduce = X.shape[1] > cfg.max_dimensions
    if reduce:
        X, _ = pca_scores(X, cfg.max_dimensions)
        kinds = [CONTINUOUS] * X.shape[1]
        names = [f"pc{j + 1}" for j in range(X.shape[1])]
    report["steps"].append({"step": PREPROCESS_STEPS[5], "applied": bool(reduce),
                            "p_after": int(X.shape[1])})

    ds = make_dataset(X, labels.to_numpy(), column_kind=kinds, column_names=names, name=name)
    report.update({"n": ds.n, "p": ds.p, "K": ds.n_classes, "column_kind": list(ds.column_kind),
                   "column_names": list(ds.column_names),
                   "label_names": [_plain(v) for v in ds.label_names]})
    return ds, report


def pca_scores(X, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Scores on the leading ``dim`` principal directions, and the loadings."""
    Xc = X - X.mean(axis=0)
    vals, vecs = np.linalg.eigh(Xc.T @ Xc / (X.shape[0] - 1))
    order = np.argsort(-vals, kind="stable")[:dim]
    loadings = vecs[:, order]
    return Xc @ loadings, loadings


def _plain(v):
    return v.item() if isinstance(v, np.generic) else v


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------


def write_preprocessed(dataset: Dataset, report: dict, csv_path, label_col: str = "target") -> Path:
    """Write the dataset as CSV plus a ``<csv>.json`` sidecar; returns the sidecar path."""
    csv_path = Path(csv_path)
    frame = pd.DataFrame(dataset.X, columns=list(dataset.column_names))
    labels = dataset.label_names if dataset.label_names else tuple(range(1, dataset.n_classes + 1))
    frame[label_col] = [labels[int(k) - 1] for k in dataset.y]
    frame.to_csv(csv_path, index=False, lineterminator="\n", float_format="%.17g")
    sidecar = sidecar_path(csv_path)
    doc = dict(report)
    doc["label_col"] = label_col
    sidecar.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_plain) + "\n")
    return sidecar


def sidecar_path(csv_path) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.name + ".json")


def read_preprocessed(csv_path, label_col: str | int | None = None) -> Dataset:
    """Read a numeric CSV, restoring column kinds from its sidecar when present."""
    csv_path = Path(csv_path)
    sidecar = sidecar_path(csv_path)
    kinds = None
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        kinds = meta.get("column_kind")
        if label_col is None:
            label_col = meta.get("label_col", "target")
    if label_col is None:
        label_col = "target"
    return read_numeric_csv(csv_path, label_col=label_col, kinds=kinds)
