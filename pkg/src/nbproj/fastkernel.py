"""Univariate poly-exponential kernel sums in O(n log n).

The kernel ``K(x) = (1 + |x|) exp(-|x|) / 4`` is a polynomial times an
exponential in ``|x|``, so the sum ``sum_j w_j K((e - x_j) / h)`` splits into
points left and right of ``e``.  Each side is a running sum over the sorted
sample that can be updated in O(1) per step.  The running sums are stored
relative to the most recent sample point, which keeps every intermediate on
the scale of the weights (no ``exp(x)`` overflow for large ``|x|``).

Kernel sums are always returned for a matrix of weight columns, so several
weighted sums over the same sample (one per class, for example) share a
single sort and sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .exceptions import DataError, EmptySample

POLY_EXP = "polyexp1"


@dataclass(frozen=True)
class KernelSpec:
    """Poly-exponential kernel of order 1 with a fixed bandwidth."""

    family: str = POLY_EXP
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.family != POLY_EXP:
            raise ValueError(f"unsupported kernel family {self.family!r}")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")


def kernel_eval(spec: KernelSpec, x):
    """K(x); the bandwidth is not applied."""
    a = np.abs(x)
    return (1.0 + a) * np.exp(-a) / 4.0


def kernel_deriv(spec: KernelSpec, x):
    """K'(x) = -x exp(-|x|) / 4."""
    x = np.asarray(x, dtype=float)
    return -x * np.exp(-np.abs(x)) / 4.0


@njit(cache=True)
def _sweep(x, w, e):
    """Kernel and derivative sums for sorted ``x`` (n,) and sorted ``e`` (m,).

    ``w`` is (n, r).  Returns two (m, r) arrays holding
    ``sum_j w_j (1+|d|) exp(-|d|)`` and ``sum_j w_j (-d) exp(-|d|)`` with
    ``d = e_s - x_j``; the factor 1/4 is applied by the caller.
    """
    n = x.shape[0]
    m = e.shape[0]
    r = w.shape[1]
    ksum = np.zeros((m, r))
    dsum = np.zeros((m, r))

    # Points with x_j <= e_s.  L0 = sum w exp(-(x_i - x_j)),
    # L1 = sum w (x_i - x_j) exp(-(x_i - x_j)), x_i the last point absorbed.
    L0 = np.zeros(r)
    L1 = np.zeros(r)
    j = 0
    last = x[0]
    for s in range(m):
        while j < n and x[j] <= e[s]:
            d = x[j] - last
            ed = np.exp(-d)
            for c in range(r):
                L1[c] = ed * (L1[c] + d * L0[c])
                L0[c] = ed * L0[c] + w[j, c]
            last = x[j]
            j += 1
        if j > 0:
            d = e[s] - last
            ed = np.exp(-d)
            for c in range(r):
                ksum[s, c] = ed * ((1.0 + d) * L0[c] + L1[c])
                dsum[s, c] = -ed * (d * L0[c] + L1[c])

    # Points with x_j > e_s, swept from the right.
    R0 = np.zeros(r)
    R1 = np.zeros(r)
    j = n - 1
    last = x[n - 1]
    for s in range(m - 1, -1, -1):
        while j >= 0 and x[j] > e[s]:
            d = last - x[j]
            ed = np.exp(-d)
            for c in range(r):
                R1[c] = ed * (R1[c] + d * R0[c])
                R0[c] = ed * R0[c] + w[j, c]
            last = x[j]
            j -= 1
        if j < n - 1:
            d = last - e[s]
            ed = np.exp(-d)
            for c in range(r):
                ksum[s, c] += ed * ((1.0 + d) * R0[c] + R1[c])
                dsum[s, c] += ed * (d * R0[c] + R1[c])
    return ksum, dsum


def _as_weight_matrix(weights, n):
    w = np.asarray(weights, dtype=float)
    vector = w.ndim == 1
    if vector:
        w = w[:, None]
    if w.shape[0] != n:
        raise DataError(f"{w.shape[0]} weights for {n} sample points")
    if not np.all(np.isfinite(w)):
        raise DataError("weights must be finite")
    return w, vector


def _exact_sums(sample, w, eval_points):
    xo = np.argsort(sample, kind="stable")
    eo = np.argsort(eval_points, kind="stable")
    ks, ds = _sweep(
        np.ascontiguousarray(sample[xo]),
        np.ascontiguousarray(w[xo]),
        np.ascontiguousarray(eval_points[eo]),
    )
    kout = np.empty_like(ks)
    dout = np.empty_like(ds)
    kout[eo] = ks
    dout[eo] = ds
    return kout, dout


@dataclass(frozen=True)
class BinnedSample:
    """Weights accumulated onto an equally spaced grid by linear binning."""

    grid: np.ndarray
    weights: np.ndarray

    @property
    def m(self) -> int:
        return self.grid.shape[0]


def _grid_positions(points, lo, step, m):
    """Left grid index and fractional offset of each point."""
    t = (points - lo) / step
    left = np.clip(np.floor(t).astype(np.int64), 0, m - 2)
    frac = np.clip(t - left, 0.0, 1.0)
    return left, frac


def bin_sample(points, weights, m: int = 1000, span=None) -> BinnedSample:
    """Linear binning of ``points`` onto ``m`` equally spaced nodes.

    Each point splits its weight between the two neighbouring nodes in
    proportion to proximity.  The grid covers ``span`` (default: the range of
    ``points``).  If the range is degenerate all weight lands on one node.
    """
    if m < 2:
        raise ValueError("need at least two bins")
    points = np.asarray(points, dtype=float)
    w, vector = _as_weight_matrix(weights, points.shape[0])
    lo, hi = (points.min(), points.max()) if span is None else span
    if not hi > lo:
        grid = np.array([lo])
        out = w.sum(axis=0, keepdims=True)
        return BinnedSample(grid, out[:, 0] if vector else out)
    grid = np.linspace(lo, hi, m)
    step = (hi - lo) / (m - 1)
    left, frac = _grid_positions(points, lo, step, m)
    out = np.zeros((m, w.shape[1]))
    for c in range(w.shape[1]):
        out[:, c] = np.bincount(left, weights=w[:, c] * (1.0 - frac), minlength=m)
        out[:, c] += np.bincount(left + 1, weights=w[:, c] * frac, minlength=m)
    return BinnedSample(grid, out[:, 0] if vector else out)


def _binned_sums(sample, w, eval_points, m):
    lo = min(sample.min(), eval_points.min())
    hi = max(sample.max(), eval_points.max())
    binned = bin_sample(sample, w, m, span=(lo, hi))
    if binned.m == 1:
        return _exact_sums(binned.grid, binned.weights, eval_points)
    ks, ds = _sweep(binned.grid, np.ascontiguousarray(binned.weights), binned.grid)
    left, frac = _grid_positions(eval_points, lo, binned.grid[1] - binned.grid[0], binned.m)
    f = frac[:, None]
    return (1.0 - f) * ks[left] + f * ks[left + 1], (1.0 - f) * ds[left] + f * ds[left + 1]


def kernel_sums(spec: KernelSpec, sample, weights, eval_points, bins: int | None = None):
    """Both ``sum_j w_j K((e - x_j)/h)`` and ``sum_j w_j K'((e - x_j)/h)``.

    Parameters
    ----------
    sample : (n,) array
    weights : (n,) or (n, r) array
        One column per weighted sum.
    eval_points : (m,) array
    bins : int, optional
        If given, approximate through linear binning on this many nodes;
        otherwise compute exactly.

    Returns
    -------
    ksum, dsum : arrays of shape (m,) or (m, r), matching ``weights``.
    """
    sample = np.asarray(sample, dtype=float).ravel()
    eval_points = np.asarray(eval_points, dtype=float).ravel()
    if sample.size == 0:
        raise EmptySample("kernel sums need at least one sample point")
    w, vector = _as_weight_matrix(weights, sample.shape[0])
    h = spec.bandwidth
    xs, es = sample / h, eval_points / h
    if eval_points.size == 0:
        ks = ds = np.zeros((0, w.shape[1]))
    elif bins is None:
        ks, ds = _exact_sums(xs, w, es)
    else:
        ks, ds = _binned_sums(xs, w, es, bins)
    ks = ks / 4.0
    ds = ds / 4.0
    if vector:
        return ks[:, 0], ds[:, 0]
    return ks, ds


def fast_kernel_sums(spec: KernelSpec, sample, weights, eval_points, bins=None):
    """Per-evaluation-point sums of ``w_j K((e_s - x_j)/h)``."""
    return kernel_sums(spec, sample, weights, eval_points, bins)[0]


def fast_kernel_deriv_sums(spec: KernelSpec, sample, weights, eval_points, bins=None):
    """Per-evaluation-point sums of ``w_j K'((e_s - x_j)/h)``."""
    return kernel_sums(spec, sample, weights, eval_points, bins)[1]


def class_indicator(labels, n_classes: int) -> np.ndarray:
    """(n, K) matrix with a one in column ``y_i - 1`` of row ``i``."""
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels - 1] = 1.0
    return out


def kde_per_class(spec: KernelSpec, projected, labels, eval_points, n_classes=None, bins=None):
    """Class-conditional KDE of one projected coordinate.

    Returns an (m, K) matrix whose column ``k`` is
    ``1/(n_k h) sum_{i: y_i = k} K((e_s - z_i)/h)``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    K = int(labels.max()) if n_classes is None else n_classes
    ind = class_indicator(labels, K)
    counts = ind.sum(axis=0)
    ks = fast_kernel_sums(spec, projected, ind, eval_points, bins)
    with np.errstate(divide="ignore", invalid="ignore"):
        return ks / (counts * spec.bandwidth)
