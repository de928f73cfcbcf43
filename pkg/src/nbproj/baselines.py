"""Comparison classifiers: NB-KDE, KDDA, LDA, RDA, nearest centroid and 1-NN.

All probabilistic models expose ``log_posterior``, ``posterior`` and
``predict``; predictions are argmax of the posterior with ties going to the
smallest class index.  Covariance estimates use the maximum-likelihood
divisor ``n_k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh
from scipy.special import logsumexp

from .data import Dataset, class_priors
from .exceptions import DegenerateSample, DimensionMismatch, SingularCovariance
from .fastkernel import KernelSpec, kernel_sums

NB_ALPHA_GRID = (0.1, 0.2, 0.3, 0.4, 0.5)
NB_GAMMA_GRID = (1 / 3, 1 / 2, 1.0, 2.0, 3.0)
RDA_LAMBDA_GRID = tuple(round(0.1 * i, 1) for i in range(1, 11))

_LOG_FLOOR = np.log(1e-300)
_LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)
_CHUNK = 2_000_000


def silverman_bandwidth(values) -> float:
    """Normal-reference rule ``(4/3)^(1/5) * sd * n^(-1/5)`` with sample sd."""
    values = np.asarray(values, dtype=float).ravel()
    n = values.shape[0]
    if n < 2:
        raise DegenerateSample("Silverman's rule needs at least two values")
    sd = values.std(ddof=1)
    if not sd > 0:
        raise DegenerateSample("Silverman's rule needs a positive standard deviation")
    return (4.0 / 3.0) ** 0.2 * sd * n ** -0.2


def _check_columns(X, p):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != p:
        raise DimensionMismatch(f"model expects {p} columns, found {X.shape[1]}")
    return X


def _row_chunks(m, width):
    step = max(1, _CHUNK // max(width, 1))
    for start in range(0, m, step):
        yield slice(start, min(m, start + step))


def _normalise(log_joint):
    return log_joint - logsumexp(log_joint, axis=1, keepdims=True)


class _Probabilistic:
    kind = ""

    def log_posterior(self, X_new) -> np.ndarray:
        raise NotImplementedError

    def posterior(self, X_new) -> np.ndarray:
        return np.exp(self.log_posterior(X_new))

    def predict(self, X_new) -> np.ndarray:
        return np.argmax(self.log_posterior(X_new), axis=1) + 1


# ---------------------------------------------------------------------------
# Naive Bayes with KDE marginals
# ---------------------------------------------------------------------------


@dataclass
class NBModel(_Probabilistic):
    """Product of univariate class-conditional KDEs.

    ``bandwidths[k, d]`` is the bandwidth for class ``k + 1`` and column
    ``d``.  ``kernel`` is ``"gaussian"`` or ``"polyexp"``.
    """

    X: np.ndarray
    y: np.ndarray
    bandwidths: np.ndarray
    priors: np.ndarray
    kernel: str = "gaussian"
    params: dict = field(default_factory=dict)
    kind = "nb"

    def log_marginals(self, X_new) -> np.ndarray:
        """(m, K, p) log marginal densities, floored at log(1e-300)."""
        X_new = _check_columns(X_new, self.X.shape[1])
        K = self.priors.shape[0]
        m, p = X_new.shape
        out = np.empty((m, K, p))
        for k in range(K):
            members = self.X[self.y == k + 1]
            for d in range(p):
                out[:, k, d] = _log_kde_1d(members[:, d], X_new[:, d], self.bandwidths[k, d],
                                           self.kernel)
        return out

    def log_posterior(self, X_new) -> np.ndarray:
        log_joint = np.log(self.priors)[None, :] + self.log_marginals(X_new).sum(axis=2)
        return _normalise(log_joint)


def _log_kde_1d(sample, points, bw, kernel):
    n = sample.shape[0]
    if kernel == "polyexp":
        ks, _ = kernel_sums(KernelSpec(bandwidth=bw), sample, np.ones(n), points)
        with np.errstate(divide="ignore"):
            return np.maximum(np.log(ks / (n * bw)), _LOG_FLOOR)
    if kernel != "gaussian":
        raise ValueError(f"unknown kernel {kernel!r}")
    out = np.empty(points.shape[0])
    for rows in _row_chunks(points.shape[0], n):
        u = (points[rows, None] - sample[None, :]) / bw
        out[rows] = logsumexp(-0.5 * u * u, axis=1) - _LOG_SQRT_2PI - np.log(n * bw)
    return np.maximum(out, _LOG_FLOOR)


def nb_bandwidths(dataset: Dataset, alpha: float, gamma: float) -> np.ndarray:
    """gamma * Silverman per class and continuous column; alpha for binary columns."""
    if not (alpha > 0 and gamma > 0):
        raise ValueError("alpha and gamma must be positive")
    K = dataset.n_classes
    binary = dataset.binary_mask
    bw = np.empty((K, dataset.p))
    for k in range(K):
        members = dataset.X[dataset.y == k + 1]
        for d in range(dataset.p):
            bw[k, d] = alpha if binary[d] else gamma * silverman_bandwidth(members[:, d])
    return bw


def fit_nb(dataset: Dataset, alpha: float = 0.3, gamma: float = 1.0,
           kernel: str = "gaussian", bandwidths=None) -> NBModel:
    """NB-KDE.  Pass ``bandwidths`` (scalar or (K, p)) to bypass the tuning rule."""
    if bandwidths is None:
        bw = nb_bandwidths(dataset, alpha, gamma)
    else:
        bw = np.broadcast_to(np.asarray(bandwidths, float), (dataset.n_classes, dataset.p)).copy()
    return NBModel(
        X=dataset.X, y=np.asarray(dataset.y), bandwidths=bw, priors=class_priors(dataset),
        kernel=kernel, params={"alpha": alpha, "gamma": gamma},
    )


def predict_nb(model: NBModel, X_new) -> np.ndarray:
    return model.predict(X_new)


# ---------------------------------------------------------------------------
# Kernel density discriminant analysis
# ---------------------------------------------------------------------------


def kdda_bandwidths(dataset: Dataset, alpha: float, gamma: float) -> np.ndarray:
    """Diagonal bandwidths per class, shape (K, p).

    Continuous block: ``gamma * (4 / (n_k (p_c + 2)))^(1/(p_c + 4)) * sd_k``
    with ML class standard deviations; binary block: ``alpha``.
    """
    binary = dataset.binary_mask
    pc = int(np.sum(~binary))
    K = dataset.n_classes
    bw = np.full((K, dataset.p), float(alpha))
    if pc == 0:
        return bw
    for k in range(K):
        members = dataset.X[dataset.y == k + 1][:, ~binary]
        nk = members.shape[0]
        factor = (4.0 / (nk * (pc + 2))) ** (1.0 / (pc + 4))
        sd = members.std(axis=0)
        if not np.all(sd > 0):
            raise DegenerateSample(f"class {k + 1} has a constant continuous column")
        bw[k, ~binary] = gamma * factor * sd
    return bw


@dataclass
class KDDAModel(_Probabilistic):
    X: np.ndarray
    y: np.ndarray
    bandwidths: np.ndarray
    priors: np.ndarray
    params: dict = field(default_factory=dict)
    kind = "kdda"

    def log_densities(self, X_new) -> np.ndarray:
        X_new = _check_columns(X_new, self.X.shape[1])
        K = self.priors.shape[0]
        out = np.empty((X_new.shape[0], K))
        for k in range(K):
            members = self.X[self.y == k + 1]
            bw = self.bandwidths[k]
            const = -np.log(members.shape[0]) - np.sum(np.log(bw)) - bw.shape[0] * _LOG_SQRT_2PI
            for rows in _row_chunks(X_new.shape[0], members.shape[0] * members.shape[1]):
                u = (X_new[rows, None, :] - members[None, :, :]) / bw
                out[rows, k] = logsumexp(-0.5 * np.sum(u * u, axis=2), axis=1) + const
        return out

    def log_posterior(self, X_new) -> np.ndarray:
        return _normalise(np.log(self.priors)[None, :] + self.log_densities(X_new))


def fit_kdda(dataset: Dataset, alpha: float = 0.3, gamma: float = 1.0) -> KDDAModel:
    return KDDAModel(
        X=dataset.X, y=np.asarray(dataset.y), bandwidths=kdda_bandwidths(dataset, alpha, gamma),
        priors=class_priors(dataset), params={"alpha": alpha, "gamma": gamma},
    )


def predict_kdda(model: KDDAModel, X_new) -> np.ndarray:
    return model.predict(X_new)


# ---------------------------------------------------------------------------
# Gaussian discriminants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianClassModel:
    means: np.ndarray        # (K, p)
    covariances: np.ndarray  # (K, p, p), ML
    pooled: np.ndarray       # (p, p), sum_k (n_k/n) Sigma_k
    priors: np.ndarray


def gaussian_class_model(dataset: Dataset) -> GaussianClassModel:
    K, p = dataset.n_classes, dataset.p
    priors = class_priors(dataset)
    means = np.empty((K, p))
    covs = np.empty((K, p, p))
    for k in range(K):
        members = dataset.X[dataset.y == k + 1]
        means[k] = members.mean(axis=0)
        c = members - means[k]
        covs[k] = c.T @ c / members.shape[0]
    pooled = np.einsum("k,kij->ij", priors, covs)
    return GaussianClassModel(means, covs, pooled, priors)


def _cholesky(S):
    """Cholesky factor, retrying once with ridge 1e-8 * trace / p."""
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        pass
    p = S.shape[0]
    ridge = 1e-8 * np.trace(S) / p
    try:
        return np.linalg.cholesky(S + ridge * np.eye(p))
    except np.linalg.LinAlgError:
        raise SingularCovariance("covariance is singular even after ridge jitter") from None


def _jittered(S):
    L = _cholesky(S)
    return L @ L.T


@dataclass
class LDAModel(_Probabilistic):
    """Shared-covariance Gaussian classes in an r-dimensional discriminant subspace."""

    means: np.ndarray
    directions: np.ndarray   # (p, r), W' Sigma_W W = I
    priors: np.ndarray
    params: dict = field(default_factory=dict)
    kind = "lda"

    def transform(self, X_new) -> np.ndarray:
        return _check_columns(X_new, self.means.shape[1]) @ self.directions

    def log_posterior(self, X_new) -> np.ndarray:
        Z = self.transform(X_new)
        centres = self.means @ self.directions
        d2 = np.sum((Z[:, None, :] - centres[None, :, :]) ** 2, axis=2)
        return _normalise(np.log(self.priors)[None, :] - 0.5 * d2)


def max_discriminant_dim(dataset: Dataset) -> int:
    return max(1, min(dataset.p, dataset.n_classes - 1))


def fit_lda(dataset: Dataset, r: int | None = None) -> LDAModel:
    """LDA with the top ``r`` discriminant directions (default: all)."""
    full = max_discriminant_dim(dataset)
    r = full if r is None else int(r)
    if not 1 <= r <= full:
        raise ValueError(f"r must lie in [1, {full}]")
    g = gaussian_class_model(dataset)
    Sw = _jittered(g.pooled)
    grand = g.priors @ g.means
    diff = g.means - grand
    between = (diff * g.priors[:, None]).T @ diff
    vals, vecs = eigh((between + between.T) / 2.0, Sw)
    order = np.argsort(-vals, kind="stable")[:r]
    return LDAModel(means=g.means, directions=vecs[:, order], priors=g.priors, params={"r": r})


def predict_lda(model: LDAModel, X_new) -> np.ndarray:
    return model.predict(X_new)


@dataclass
class GaussianDAModel(_Probabilistic):
    means: np.ndarray
    chol: np.ndarray   # (K, p, p) lower Cholesky factors of the class covariances
    priors: np.ndarray
    params: dict = field(default_factory=dict)
    kind = "rda"

    def log_posterior(self, X_new) -> np.ndarray:
        X_new = _check_columns(X_new, self.means.shape[1])
        K = self.priors.shape[0]
        log_joint = np.empty((X_new.shape[0], K))
        for k in range(K):
            L = self.chol[k]
            sol = np.linalg.solve(L, (X_new - self.means[k]).T)
            log_det = 2.0 * np.sum(np.log(np.diag(L)))
            log_joint[:, k] = np.log(self.priors[k]) - 0.5 * np.sum(sol * sol, axis=0) - 0.5 * log_det
        return _normalise(log_joint)


def rda_covariances(g: GaussianClassModel, lam: float) -> np.ndarray:
    return lam * g.covariances + (1.0 - lam) * g.pooled[None, :, :]


def fit_rda(dataset: Dataset, lam: float = 0.5) -> GaussianDAModel:
    """Class covariances ``lam * Sigma_k + (1 - lam) * Sigma_W``."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lam must lie in [0, 1]")
    g = gaussian_class_model(dataset)
    covs = rda_covariances(g, lam)
    chol = np.stack([_cholesky(c) for c in covs])
    return GaussianDAModel(means=g.means, chol=chol, priors=g.priors, params={"lam": lam})


def predict_rda(model: GaussianDAModel, X_new) -> np.ndarray:
    return model.predict(X_new)


# ---------------------------------------------------------------------------
# Nearest centroid and one nearest neighbour
# ---------------------------------------------------------------------------


def predict_nc(train: Dataset, X_new) -> np.ndarray:
    """Label of the closest class mean (ties: smallest class index)."""
    X_new = _check_columns(X_new, train.p)
    means = np.stack([train.X[train.y == k].mean(axis=0) for k in range(1, train.n_classes + 1)])
    return np.argmin(_exact_sq_distances(X_new, means), axis=1) + 1


def predict_1nn(train: Dataset, X_new) -> np.ndarray:
    """Label of the closest training point (ties: smallest training index)."""
    X_new = _check_columns(X_new, train.p)
    out = np.empty(X_new.shape[0], dtype=np.int64)
    for rows in _row_chunks(X_new.shape[0], train.n):
        out[rows] = train.y[np.argmin(_exact_sq_distances(X_new[rows], train.X), axis=1)]
    return out


def _exact_sq_distances(A, B):
    # Direct differences so that exact ties (and zero self-distance) are preserved.
    out = np.empty((A.shape[0], B.shape[0]))
    for rows in _row_chunks(A.shape[0], B.shape[0] * B.shape[1]):
        diff = A[rows, None, :] - B[None, :, :]
        out[rows] = np.sum(diff * diff, axis=2)
    return out


@dataclass
class NCModel:
    train: Dataset
    kind = "nc"

    def predict(self, X_new):
        return predict_nc(self.train, X_new)


@dataclass
class OneNNModel:
    train: Dataset
    kind = "1nn"

    def predict(self, X_new):
        return predict_1nn(self.train, X_new)


def fit_nc(dataset: Dataset) -> NCModel:
    return NCModel(dataset)


def fit_1nn(dataset: Dataset) -> OneNNModel:
    return OneNNModel(dataset)

