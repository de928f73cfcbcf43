"""Benchmark protocol: CV tuning, repeated splits, standardised errors.

Every (dataset, repeat) cell draws its split and folds from a seed derived
from the master seed, a stable hash of the dataset name and the repeat
index, so all methods in a repeat see identical partitions and cells can be
run in any order.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import time
import warnings
import zlib
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import baselines, opnb
from .data import Dataset
from .exceptions import DegenerateRow, NBProjError, RankDeficient
from .pipeline import stratified_kfold, train_test_split
from .scaling import apply_scaling, fit_scaling

log = logging.getLogger(__name__)

OPNB_LAMBDA_GRID = tuple(1e-4 * 2 ** i for i in range(10))


@dataclass
class Method:
    """A tunable classifier: ``fit(train, **params)`` returns an object with ``predict``."""

    name: str
    fit: Callable
    grid: Callable[[Dataset], list]

    def candidates(self, train: Dataset) -> list:
        return list(self.grid(train)) or [{}]


def _product(**axes):
    keys = list(axes)
    return [dict(zip(keys, values)) for values in itertools.product(*axes.values())]


def make_methods(opnb_config: opnb.OPNBConfig | None = None, opnb_grid=OPNB_LAMBDA_GRID,
                 ) -> dict[str, Method]:
    """The method registry; ``opnb_config`` supplies OPNB settings other than lambda."""
    base = opnb_config or opnb.OPNBConfig()

    def fit_opnb(train, lam):
        cfg = opnb.OPNBConfig(**{**_config_kwargs(base), "lam": lam, "standardize": False})
        return opnb.fit(train, cfg)

    return {
        "opnb": Method("opnb", fit_opnb, lambda ds: _product(lam=opnb_grid)),
        "nb": Method("nb", baselines.fit_nb, lambda ds: _product(
            alpha=baselines.NB_ALPHA_GRID if ds.binary_mask.any() else (0.3,),
            gamma=baselines.NB_GAMMA_GRID if (~ds.binary_mask).any() else (1.0,))),
        "kdda": Method("kdda", baselines.fit_kdda, lambda ds: _product(
            alpha=baselines.NB_ALPHA_GRID if ds.binary_mask.any() else (0.3,),
            gamma=baselines.NB_GAMMA_GRID if (~ds.binary_mask).any() else (1.0,))),
        "lda": Method("lda", baselines.fit_lda, lambda ds: _product(
            r=range(1, baselines.max_discriminant_dim(ds) + 1))),
        "rda": Method("rda", baselines.fit_rda, lambda ds: _product(lam=baselines.RDA_LAMBDA_GRID)),
        "nc": Method("nc", baselines.fit_nc, lambda ds: [{}]),
        "1nn": Method("1nn", baselines.fit_1nn, lambda ds: [{}]),
    }


def _config_kwargs(cfg: opnb.OPNBConfig) -> dict:
    return {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}


def cell_seed(master: int, dataset_name: str, repeat: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master, zlib.crc32(dataset_name.encode()), repeat])


def _scaled_pair(train: Dataset, test: Dataset):
    params = fit_scaling(train.X)
    return replace(train, X=apply_scaling(train.X, params)), apply_scaling(test.X, params)


def misclassification(method: Method, params: dict, train: Dataset, test: Dataset) -> float:
    """Scale by training sds, fit on ``train``, and return the test error rate."""
    tr, Xte = _scaled_pair(train, test)
    model = method.fit(tr, **params)
    return float(np.mean(model.predict(Xte) != test.y))


@dataclass
class CVResult:
    best: dict
    grid: list
    errors: np.ndarray


def cross_validate(method: Method, grid: Sequence[dict], train: Dataset, folds: int = 5,
                   seed=0, fold_ids=None) -> CVResult:
    """Mean CV error per grid point; the first minimiser in grid order wins.

    Grid points whose fits fail on any fold get an error of NaN and are
    never selected unless every point fails.
    """
    grid = list(grid) or [{}]
    if fold_ids is None:
        fold_ids = stratified_kfold(train.y, folds, seed)
    errors = np.full(len(grid), np.nan)
    if len(grid) == 1:
        return CVResult(grid[0], grid, errors)
    for g, params in enumerate(grid):
        fold_err = []
        try:
            for f in range(int(fold_ids.max()) + 1):
                held = fold_ids == f
                if not held.any() or held.all():
                    continue
                fold_err.append(misclassification(method, params, train.subset(~held),
                                                  train.subset(held)) * held.sum())
            errors[g] = np.sum(fold_err) / train.n
        except (NBProjError, np.linalg.LinAlgError, ValueError) as exc:
            log.info("%s %s failed in CV: %s", method.name, params, exc)
    if np.all(np.isnan(errors)):
        return CVResult(grid[0], grid, errors)
    return CVResult(grid[int(np.nanargmin(errors))], grid, errors)


@dataclass
class ExperimentReport:
    """Long-format results, one record per (dataset, method, repeat)."""

    records: list = field(default_factory=list)
    datasets: list = field(default_factory=list)
    methods: list = field(default_factory=list)
    repeats: int = 0
    seed: int = 0

    def error_cube(self) -> np.ndarray:
        cube = np.full((len(self.datasets), len(self.methods), self.repeats), np.nan)
        d_idx = {d: i for i, d in enumerate(self.datasets)}
        m_idx = {m: i for i, m in enumerate(self.methods)}
        for r in self.records:
            cube[d_idx[r["dataset"]], m_idx[r["method"]], r["repeat"]] = r["error"]
        return cube

    def mean_errors(self) -> np.ndarray:
        """(datasets, methods) average test error; NaN if any repeat failed."""
        return self.error_cube().mean(axis=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["dataset", "method", "repeat", "error", "hyperparams"])
        for r in self.records:
            writer.writerow([r["dataset"], r["method"], r["repeat"], repr(r["error"]),
                             json.dumps(r["params"], sort_keys=True)])
        return buf.getvalue()

    def timings_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["dataset", "method", "repeat", "seconds"])
        for r in self.records:
            writer.writerow([r["dataset"], r["method"], r["repeat"], f"{r['seconds']:.3f}"])
        return buf.getvalue()

    def summary(self) -> dict:
        avg = self.mean_errors()
        ok = ~np.isnan(avg).any(axis=1)
        out = {
            "datasets": self.datasets,
            "methods": self.methods,
            "repeats": self.repeats,
            "seed": self.seed,
            "mean_errors": _nan_to_none(avg),
            "pairwise_wins": pairwise_wins(avg).tolist(),
        }
        min_norm = np.full_like(avg, np.nan)
        stud = np.full_like(avg, np.nan)
        if ok.any():
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                good = [i for i in np.flatnonzero(ok) if np.min(avg[i]) < 1]
                if good:
                    min_norm[good] = min_normalize(avg[good])
                if len(self.methods) >= 2:
                    stud[ok] = studentise(avg[ok])
        out["min_normalised"] = _nan_to_none(min_norm)
        out["studentised"] = _nan_to_none(stud)
        out["average_min_normalised"] = _nan_to_none(_col_nanmean(min_norm))
        out["average_studentised"] = _nan_to_none(_col_nanmean(stud))
        return out


def _col_nanmean(a):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return np.nanmean(a, axis=0) if a.size else np.array([])


def _nan_to_none(a):
    a = np.asarray(a, dtype=float)
    return np.where(np.isnan(a), None, a).tolist()


def run_experiment(datasets: dict[str, Dataset] | Sequence[Dataset], methods, repeats: int = 10,
                   seed: int = 0, folds: int = 5, train_fraction: float = 0.75,
                   progress: Callable[[str], None] | None = None) -> ExperimentReport:
    """Repeated stratified train/test evaluation with CV tuning on each training set."""
    if not isinstance(datasets, dict):
        datasets = {ds.name or f"dataset{i}": ds for i, ds in enumerate(datasets)}
    if isinstance(methods, dict):
        methods = list(methods.values())
    report = ExperimentReport(datasets=list(datasets), methods=[m.name for m in methods],
                              repeats=repeats, seed=seed)
    for name, ds in datasets.items():
        for rep in range(repeats):
            split_seed, fold_seed = cell_seed(seed, name, rep).spawn(2)
            train, test, _, _ = train_test_split(ds, train_fraction, split_seed)
            fold_ids = stratified_kfold(train.y, folds, fold_seed)
            for method in methods:
                start = time.perf_counter()
                record = {"dataset": name, "method": method.name, "repeat": rep,
                          "error": float("nan"), "params": {}, "status": "ok"}
                try:
                    cv = cross_validate(method, method.candidates(train), train, folds,
                                        fold_ids=fold_ids)
                    record["params"] = cv.best
                    record["error"] = misclassification(method, cv.best, train, test)
                except (NBProjError, np.linalg.LinAlgError, ValueError) as exc:
                    record["status"] = f"failed: {type(exc).__name__}: {exc}"
                    log.warning("%s/%s/%d failed: %s", name, method.name, rep, exc)
                record["seconds"] = time.perf_counter() - start
                report.records.append(record)
                if progress:
                    progress(f"{name} {method.name} repeat {rep}: {record['error']:.4f}")
    return report


# ---------------------------------------------------------------------------
# Standardisation and comparison
# ---------------------------------------------------------------------------


def min_normalize(errors) -> np.ndarray:
    """Row-wise ``(e - min) / (1 - min)``.

    Raises
    ------
    DegenerateRow
        If some row's best error is 1.
    """
    E = np.atleast_2d(np.asarray(errors, dtype=float))
    lo = E.min(axis=1, keepdims=True)
    if np.any(lo >= 1):
        raise DegenerateRow("min-normalisation needs a method with error below 1")
    out = (E - lo) / (1.0 - lo)
    return out if np.ndim(errors) > 1 else out[0]


def studentise(errors, return_flags: bool = False):
    """Row-wise ``(e - mean) / sd`` with sample sd; constant rows become zeros."""
    E = np.atleast_2d(np.asarray(errors, dtype=float))
    if E.shape[1] < 2:
        raise ValueError("studentisation needs at least two methods")
    mean = E.mean(axis=1, keepdims=True)
    sd = E.std(axis=1, ddof=1, keepdims=True)
    flat = ~(sd[:, 0] > 0)
    if flat.any():
        warnings.warn(f"{int(flat.sum())} row(s) with zero variance set to 0", RuntimeWarning)
    out = np.where(flat[:, None], 0.0, (E - mean) / np.where(flat[:, None], 1.0, sd))
    out = out if np.ndim(errors) > 1 else out[0]
    return (out, flat) if return_flags else out


def pairwise_wins(avg_errors) -> np.ndarray:
    """``W[a, b]`` = number of datasets where method ``a`` has strictly lower error than ``b``."""
    E = np.asarray(avg_errors, dtype=float)
    less = E[:, :, None] < E[:, None, :]
    return less.sum(axis=0).astype(np.int64)


def pairwise_ties(avg_errors) -> np.ndarray:
    E = np.asarray(avg_errors, dtype=float)
    return (E[:, :, None] == E[:, None, :]).sum(axis=0).astype(np.int64)


# ---------------------------------------------------------------------------
# Dataset characterisation
# ---------------------------------------------------------------------------

STAT_NAMES = ("p", "n", "binary_proportion", "class_imbalance", "K", "complexity")


@dataclass(frozen=True)
class DatasetStats:
    p: int
    n: int
    binary_proportion: float
    class_imbalance: float
    K: int
    complexity: float

    def as_vector(self) -> np.ndarray:
        return np.array([getattr(self, s) for s in STAT_NAMES], dtype=float)


def complexity_score(dataset: Dataset, seed=0, repeats: int = 10,
                     train_fraction: float = 0.75) -> float:
    """Min-normalised nearest-centroid error against 1-NN (0 when NC is no worse)."""
    methods = make_methods()
    name = dataset.name or "dataset"
    errs = np.zeros(2)
    for rep in range(repeats):
        split_seed, _ = cell_seed(seed, name, rep).spawn(2)
        train, test, _, _ = train_test_split(dataset, train_fraction, split_seed)
        errs += [misclassification(methods[m], {}, train, test) for m in ("nc", "1nn")]
    return float(min_normalize(errs / repeats)[0])


def dataset_stats(dataset: Dataset, seed=0, repeats: int = 10) -> DatasetStats:
    props = dataset.class_counts / dataset.n
    return DatasetStats(
        p=dataset.p,
        n=dataset.n,
        binary_proportion=float(dataset.binary_mask.mean()),
        class_imbalance=float(np.var(props)),
        K=dataset.n_classes,
        complexity=complexity_score(dataset, seed, repeats),
    )


@dataclass
class RegressionResult:
    coefficients: np.ndarray   # intercept first, then one per statistic
    residuals: np.ndarray
    names: tuple = ("intercept",) + STAT_NAMES


def stats_regression(response, stats) -> RegressionResult:
    """OLS of ``response`` on statistics scaled to unit (population) variance.

    Raises
    ------
    RankDeficient
        With fewer datasets than coefficients, a constant statistic, or
        collinear statistics.
    """
    y = np.asarray(response, dtype=float)
    S = np.asarray(stats, dtype=float)
    n, q = S.shape
    if n < q + 1:
        raise RankDeficient(f"need at least {q + 1} datasets, have {n}")
    sd = S.std(axis=0)
    if np.any(~(sd > 0)):
        raise RankDeficient("a statistic is constant across datasets")
    A = np.column_stack([np.ones(n), S / sd])
    if np.linalg.matrix_rank(A) < q + 1:
        raise RankDeficient("statistics are collinear")
    beta = np.linalg.solve(A.T @ A, A.T @ y)
    return RegressionResult(beta, y - A @ beta)
