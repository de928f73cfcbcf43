"""Optimal projections for Naive Bayes.

A projection matrix ``V`` (p x p') is chosen to maximise the penalised
multinomial log-likelihood

    (1/n) * sum_i [log(pi_{y_i} f_{y_i}(z_i)) - log(sum_k pi_k f_k(z_i))]
        - lam * tr(V' C V),

where ``z_i = V' x_i`` and each class density ``f_k`` is the product of
univariate kernel density estimates along the columns of ``V``.  The
bandwidth is fixed at ``h = 1``; the scale of ``V`` plays the role of an
inverse bandwidth, which is why the penalty is needed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.special import logsumexp

from .data import Dataset, class_priors
from .exceptions import DimensionMismatch, NonFiniteObjective
from .fastkernel import KernelSpec, class_indicator, kernel_sums
from .lbfgs import minimize_lbfgs
from .scaling import ScalingParams, apply_scaling, fit_scaling

log = logging.getLogger(__name__)

DENSITY_FLOOR = 1e-300
LOG_FLOOR = np.log(DENSITY_FLOOR)

PenaltyMode = Literal["frobenius", "total_covariance", "within_class_covariance"]
PENALTY_MODES = ("frobenius", "total_covariance", "within_class_covariance")


@dataclass(frozen=True)
class OPNBConfig:
    """Hyperparameters for :func:`fit`.

    ``dim=None`` means ``min(p, 20)``.  ``init`` is ``"pca"``, ``"random"``
    or an explicit (p, dim) array.  With ``n_restarts > 1`` the extra runs
    start from random orthonormal matrices drawn from ``seed``.
    """

    dim: int | None = None
    lam: float = 1e-3
    penalty_mode: PenaltyMode = "frobenius"
    kernel: KernelSpec = field(default_factory=KernelSpec)
    init: object = "pca"
    seed: int = 0
    n_restarts: int = 1
    binning: bool = True
    bins: int = 1000
    max_iterations: int = 200
    gradient_tolerance: float = 1e-5
    memory: int = 10
    standardize: bool = True

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if self.penalty_mode not in PENALTY_MODES:
            raise ValueError(f"unknown penalty mode {self.penalty_mode!r}")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be at least 1")
        if self.bins < 2:
            raise ValueError("bins must be at least 2")

    def resolved_dim(self, p: int) -> int:
        dim = min(p, 20) if self.dim is None else int(self.dim)
        if not 1 <= dim <= p:
            raise ValueError(f"projection dimension {dim} outside [1, {p}]")
        return dim

    def echo(self) -> dict:
        init = self.init if isinstance(self.init, str) else "explicit"
        return {
            "dim": self.dim,
            "lam": self.lam,
            "penalty_mode": self.penalty_mode,
            "kernel": {"family": self.kernel.family, "bandwidth": self.kernel.bandwidth},
            "init": init,
            "seed": self.seed,
            "n_restarts": self.n_restarts,
            "binning": self.binning,
            "bins": self.bins,
            "max_iterations": self.max_iterations,
            "gradient_tolerance": self.gradient_tolerance,
            "memory": self.memory,
            "standardize": self.standardize,
        }


def project(X, V) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    V = np.asarray(V, dtype=float)
    if X.ndim != 2 or V.ndim != 2 or X.shape[1] != V.shape[0]:
        raise DimensionMismatch(f"cannot project {X.shape} data with a {V.shape} matrix")
    return X @ V


# ---------------------------------------------------------------------------
# Log-likelihood and its gradient with respect to the projected data
# ---------------------------------------------------------------------------


@dataclass
class _Densities:
    """Per-column class density evaluations at the projected points."""

    ksum: np.ndarray        # (n, K, d) raw kernel sums over class k
    dsum: np.ndarray        # (n, K, d) raw kernel-derivative sums over class k
    log_f: np.ndarray       # (n, K, d) floored log marginal densities
    floored: np.ndarray     # (n, K, d) bool
    log_joint: np.ndarray   # (n, K) log(pi_k f_k(z_i))
    log_mix: np.ndarray     # (n,)  log f_Z(z_i)


def _densities(Z, y, priors, kernel: KernelSpec, bins=None) -> _Densities:
    n, d = Z.shape
    K = priors.shape[0]
    ind = class_indicator(y, K)
    counts = ind.sum(axis=0)
    h = kernel.bandwidth
    ksum = np.empty((n, K, d))
    dsum = np.empty((n, K, d))
    for t in range(d):
        ksum[:, :, t], dsum[:, :, t] = kernel_sums(kernel, Z[:, t], ind, Z[:, t], bins)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = ksum / (counts[None, :, None] * h)
    floored = ~(f > DENSITY_FLOOR)
    log_f = np.where(floored, LOG_FLOOR, np.log(np.where(floored, 1.0, f)))
    with np.errstate(divide="ignore"):
        log_joint = np.log(priors)[None, :] + log_f.sum(axis=2)
    log_mix = logsumexp(log_joint, axis=1)
    return _Densities(ksum, dsum, log_f, floored, log_joint, log_mix)


def _loglik_from(dens: _Densities, y) -> float:
    own = dens.log_joint[np.arange(y.shape[0]), y - 1]
    return float(np.sum(own - dens.log_mix))


def log_likelihood(Z, y, priors, kernel: KernelSpec = KernelSpec(), bins=None) -> float:
    """Multinomial log-likelihood of the labels under the NB-KDE posterior.

    Computed in log space with each marginal density floored at 1e-300.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    return _loglik_from(_densities(Z, y, np.asarray(priors, float), kernel, bins), y)


def _gradient_from(dens: _Densities, Z, y, priors, kernel, bins=None) -> np.ndarray:
    n, d = Z.shape
    K = priors.shape[0]
    h = kernel.bandwidth
    rows = np.arange(n)
    counts = np.bincount(y, minlength=K + 1)[1:].astype(float)
    own = y - 1
    post = np.exp(dens.log_joint - dens.log_mix[:, None])
    grad = np.empty((n, d))
    for t in range(d):
        ks = dens.ksum[:, :, t]
        with np.errstate(divide="ignore", invalid="ignore"):
            score = np.where(dens.floored[:, :, t], 0.0, dens.dsum[:, :, t] / (ks * h))
            # 1 / f_{t|k}(z_it) for members of class k; the point's own kernel keeps f > 0.
            f_own = ks[rows, own] / (counts[own] * h)
            inv_own = class_indicator(y, K) / f_own[:, None]
            # f_{-t|k}(z_i) / f_Z(z_i), zero where f_{t|k}(z_it) sits on the floor.
            log_ratio = (dens.log_joint - np.log(priors)[None, :] - dens.log_f[:, :, t]
                         - dens.log_mix[:, None])
        ratio = np.where(dens.floored[:, :, t], 0.0, np.exp(np.minimum(log_ratio, 700.0)))
        weights = np.concatenate([inv_own, ratio], axis=1)
        _, dw = kernel_sums(kernel, Z[:, t], weights, Z[:, t], bins)
        t1 = dw[rows, own] / (counts[own] * h * h) + score[rows, own]
        t2 = np.sum(post * score, axis=1) + dw[rows, K + own] / (n * h * h)
        grad[:, t] = t1 - t2
    return grad


def gradient_z(Z, y, priors, kernel: KernelSpec = KernelSpec(), bins=None) -> np.ndarray:
    """Partial derivatives of :func:`log_likelihood` with respect to each ``z_st``."""
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    priors = np.asarray(priors, float)
    dens = _densities(Z, y, priors, kernel, bins)
    return _gradient_from(dens, Z, y, priors, kernel, bins)


def gradient_v(X, grad_z, V, lam, C) -> np.ndarray:
    """Chain rule from ``dl/dZ`` to the penalised objective's gradient in ``V``."""
    X = np.asarray(X, dtype=float)
    grad_z = np.asarray(grad_z, dtype=float)
    V = np.asarray(V, dtype=float)
    if X.shape[0] != grad_z.shape[0] or V.shape != (X.shape[1], grad_z.shape[1]):
        raise DimensionMismatch("inconsistent shapes for X, grad_z and V")
    return X.T @ grad_z / X.shape[0] - 2.0 * lam * (C @ V)


# ---------------------------------------------------------------------------
# Penalty, objective and initialisation
# ---------------------------------------------------------------------------


def pooled_within_covariance(X, y) -> np.ndarray:
    """sum_k (n_k/n) Sigma_k with maximum-likelihood class covariances."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    centred = np.empty_like(X)
    for k in np.unique(y):
        idx = y == k
        centred[idx] = X[idx] - X[idx].mean(axis=0)
    return centred.T @ centred / X.shape[0]


def penalty_matrix(X, y, mode: str) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    p = X.shape[1]
    if mode == "frobenius":
        return np.eye(p)
    if mode == "total_covariance":
        C = np.cov(X, rowvar=False).reshape(p, p)
    elif mode == "within_class_covariance":
        C = pooled_within_covariance(X, y)
    else:
        raise ValueError(f"unknown penalty mode {mode!r}")
    return (C + C.T) / 2.0


def penalized_objective(V, X, y, priors, lam, C, kernel: KernelSpec = KernelSpec(),
                        bins=None) -> float:
    """(1/n) * log-likelihood of ``X V`` minus ``lam * tr(V' C V)``."""
    V = np.asarray(V, dtype=float)
    Z = project(X, V)
    ll = log_likelihood(Z, y, priors, kernel, bins)
    return ll / Z.shape[0] - lam * float(np.sum(V * (C @ V)))


def objective_and_gradient(V, X, y, priors, lam, C, kernel: KernelSpec = KernelSpec(),
                           bins=None) -> tuple[float, np.ndarray]:
    V = np.asarray(V, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    priors = np.asarray(priors, float)
    Z = project(X, V)
    dens = _densities(Z, y, priors, kernel, bins)
    value = _loglik_from(dens, y) / Z.shape[0] - lam * float(np.sum(V * (C @ V)))
    gz = _gradient_from(dens, Z, y, priors, kernel, bins)
    return value, gradient_v(X, gz, V, lam, C)


def _fix_signs(V):
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def pca_init(X, dim: int) -> np.ndarray:
    """Leading unit-norm principal directions, largest-magnitude entry positive."""
    X = np.asarray(X, dtype=float)
    p = X.shape[1]
    if not 1 <= dim <= p:
        raise ValueError(f"dim must lie in [1, {p}]")
    cov = np.cov(X, rowvar=False).reshape(p, p)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(-vals, kind="stable")[:dim]
    return _fix_signs(vecs[:, order])


def random_init(seed, p: int, dim: int) -> np.ndarray:
    """Gaussian matrix with orthonormalised columns, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((p, dim))
    Q, R = np.linalg.qr(A)
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    return Q * d


# ---------------------------------------------------------------------------
# Fitting and prediction
# ---------------------------------------------------------------------------


@dataclass
class TrainedOPNBModel:
    V: np.ndarray
    Z: np.ndarray
    y: np.ndarray
    priors: np.ndarray
    kernel: KernelSpec
    column_scales: np.ndarray
    objective_trace: list
    objective: float = float("nan")
    converged: bool = False
    line_search_failed: bool = False
    n_iter: int = 0
    config: dict = field(default_factory=dict)
    label_names: tuple = ()
    kind: str = "opnb"

    @property
    def n_classes(self) -> int:
        return self.priors.shape[0]

    @property
    def dim(self) -> int:
        return self.V.shape[1]

    def class_points(self, k: int) -> np.ndarray:
        return self.Z[self.y == k]

    def transform(self, X_new) -> np.ndarray:
        """Scale raw covariates and project them."""
        X_new = np.asarray(X_new, dtype=float)
        if X_new.ndim == 1:
            X_new = X_new[None, :]
        if X_new.shape[1] != self.V.shape[0]:
            raise DimensionMismatch(
                f"model expects {self.V.shape[0]} columns, found {X_new.shape[1]}"
            )
        return project(apply_scaling(X_new, ScalingParams(self.column_scales)), self.V)

    def log_posterior(self, X_new) -> np.ndarray:
        return log_posterior_projected(self.transform(X_new), self.Z, self.y, self.priors,
                                       self.kernel)

    def posterior(self, X_new) -> np.ndarray:
        return np.exp(self.log_posterior(X_new))

    def predict(self, X_new) -> np.ndarray:
        return np.argmax(self.log_posterior(X_new), axis=1) + 1

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "V": self.V.tolist(),
            "column_scales": self.column_scales.tolist(),
            "priors": self.priors.tolist(),
            "kernel": {"family": self.kernel.family, "bandwidth": self.kernel.bandwidth},
            "class_points": [self.class_points(k).tolist() for k in range(1, self.n_classes + 1)],
            "objective_trace": list(map(float, self.objective_trace)),
            "objective": self.objective,
            "converged": self.converged,
            "line_search_failed": self.line_search_failed,
            "n_iter": self.n_iter,
            "config": self.config,
            "label_names": list(self.label_names),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainedOPNBModel":
        V = np.array(doc["V"], dtype=float)
        blocks = [np.array(b, dtype=float).reshape(-1, V.shape[1]) for b in doc["class_points"]]
        Z = np.vstack(blocks)
        y = np.concatenate([np.full(b.shape[0], k + 1) for k, b in enumerate(blocks)])
        return cls(
            V=V,
            Z=Z,
            y=y.astype(np.int64),
            priors=np.array(doc["priors"], dtype=float),
            kernel=KernelSpec(**doc["kernel"]),
            column_scales=np.array(doc["column_scales"], dtype=float),
            objective_trace=list(doc["objective_trace"]),
            objective=doc.get("objective", float("nan")),
            converged=doc.get("converged", False),
            line_search_failed=doc.get("line_search_failed", False),
            n_iter=doc.get("n_iter", 0),
            config=doc.get("config", {}),
            label_names=tuple(doc.get("label_names", ())),
        )


def log_posterior_projected(Z_new, Z_train, y_train, priors, kernel: KernelSpec) -> np.ndarray:
    """Log posterior class probabilities for already projected points."""
    K = priors.shape[0]
    ind = class_indicator(y_train, K)
    counts = ind.sum(axis=0)
    m, d = Z_new.shape
    log_joint = np.tile(np.log(priors), (m, 1))
    for t in range(d):
        ks, _ = kernel_sums(kernel, Z_train[:, t], ind, Z_new[:, t])
        f = ks / (counts * kernel.bandwidth)
        with np.errstate(divide="ignore"):
            log_joint += np.maximum(np.log(f), LOG_FLOOR)
    return log_joint - logsumexp(log_joint, axis=1, keepdims=True)


def posterior(model: TrainedOPNBModel, X_new) -> np.ndarray:
    return model.posterior(X_new)


def predict(model: TrainedOPNBModel, X_new) -> np.ndarray:
    """Most probable class per row; exact ties go to the smallest class index."""
    return model.predict(X_new)


def _initial_matrices(config: OPNBConfig, X, p, dim):
    init = config.init
    if isinstance(init, str):
        if init == "pca":
            first = pca_init(X, dim)
        elif init == "random":
            first = None
        else:
            raise ValueError(f"unknown init {init!r}")
    else:
        first = np.asarray(init, dtype=float)
        if first.shape != (p, dim):
            raise DimensionMismatch(f"explicit init has shape {first.shape}, need {(p, dim)}")
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_restarts)
    starts = []
    for r in range(config.n_restarts):
        if r == 0 and first is not None:
            starts.append(first)
        else:
            starts.append(random_init(seeds[r], p, dim))
    return starts


def fit(dataset: Dataset, config: OPNBConfig = OPNBConfig()) -> TrainedOPNBModel:
    """Fit the projection by L-BFGS ascent on the penalised objective.

    Raises
    ------
    NonFiniteObjective
        If the objective cannot be evaluated at any starting point.
    """
    X = dataset.X
    y = np.asarray(dataset.y, dtype=np.int64)
    n, p = X.shape
    if config.standardize:
        scales = fit_scaling(X).sd
    else:
        scales = np.ones(p)
    Xs = X / scales
    dim = config.resolved_dim(p)
    priors = class_priors(dataset)
    C = penalty_matrix(Xs, y, config.penalty_mode)
    bins = config.bins if config.binning else None

    def negated(v):
        value, grad = objective_and_gradient(v.reshape(p, dim), Xs, y, priors, config.lam, C,
                                             config.kernel, bins)
        return -value, -grad.ravel()

    best = None
    for V0 in _initial_matrices(config, Xs, p, dim):
        try:
            res = minimize_lbfgs(negated, V0.ravel(), memory=config.memory,
                                 max_iter=config.max_iterations,
                                 gtol=config.gradient_tolerance)
        except NonFiniteObjective:
            log.warning("skipping a start with non-finite objective")
            continue
        if res.line_search_failed:
            log.info("line search failed after %d iterations; keeping best iterate", res.n_iter)
        if best is None or -res.fun > -best.fun:
            best = res
    if best is None:
        raise NonFiniteObjective("no starting point gave a finite objective")

    V = best.x.reshape(p, dim)
    return TrainedOPNBModel(
        V=V,
        Z=Xs @ V,
        y=y,
        priors=priors,
        kernel=config.kernel,
        column_scales=scales,
        objective_trace=[-f for f in best.trace],
        objective=-best.fun,
        converged=best.converged,
        line_search_failed=best.line_search_failed,
        n_iter=best.n_iter,
        config=config.echo(),
        label_names=tuple(dataset.label_names),
    )


def unfitted_model(dataset: Dataset, V, kernel: KernelSpec = KernelSpec(),
                   standardize: bool = False) -> TrainedOPNBModel:
    """A model using a given projection without any optimisation."""
    X = dataset.X
    scales = fit_scaling(X).sd if standardize else np.ones(X.shape[1])
    V = np.asarray(V, dtype=float)
    return TrainedOPNBModel(
        V=V,
        Z=(X / scales) @ V,
        y=np.asarray(dataset.y, dtype=np.int64),
        priors=class_priors(dataset),
        kernel=kernel,
        column_scales=scales,
        objective_trace=[],
    )


def ica_decomposition_check(Z, y, priors, kernel: KernelSpec = KernelSpec()):
    """Own-class log-likelihood term, computed two ways.

    ``lhs`` sums ``log(pi_{y_i} f_{y_i}(z_i))`` over observations; ``rhs``
    rewrites it as class-weighted averages of per-coordinate log densities.
    """
    from .fastkernel import kde_per_class

    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    priors = np.asarray(priors, dtype=float)
    lhs = float(np.sum(_densities(Z, y, priors, kernel).log_joint[np.arange(y.shape[0]), y - 1]))

    K = priors.shape[0]
    counts = np.bincount(y, minlength=K + 1)[1:]
    rhs = float(np.sum(counts * np.log(priors)))
    for t in range(Z.shape[1]):
        dens = kde_per_class(kernel, Z[:, t], y, Z[:, t], n_classes=K)
        for k in range(1, K + 1):
            members = y == k
            rhs += counts[k - 1] * np.mean(np.log(dens[members, k - 1]))
    return lhs, rhs
