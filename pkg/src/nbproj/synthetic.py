"""Synthetic classification problems with known structure.

``rotated_factorised`` draws three classes whose densities are products of
univariate mixtures along the cardinal basis rotated by pi/8; its Bayes error
is available through :func:`bayes_error` by grid quadrature.
``elongated`` mimics sequential data with a dominant, class-irrelevant
direction carrying almost all of the variance.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import norm

# Per class, per rotated axis: (mixture weights, means, standard deviations).
BIMODAL = ((0.5, 0.5), (-2.0, 2.0), (0.9, 0.9))
UNIMODAL = ((1.0,), (0.0,), (0.82,))
ROTATED_CLASSES = (
    (BIMODAL, UNIMODAL),
    (UNIMODAL, BIMODAL),
    (BIMODAL, BIMODAL),
)


def rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def _mixture_pdf(spec, u):
    weights, means, sds = spec
    return sum(w * norm.pdf(u, m, s) for w, m, s in zip(weights, means, sds))


def _mixture_draw(spec, n, rng):
    weights, means, sds = spec
    comp = rng.choice(len(weights), size=n, p=weights)
    return rng.normal(np.asarray(means)[comp], np.asarray(sds)[comp])


def rotated_factorised(n: int, seed=None, theta: float = np.pi / 8,
                       classes=ROTATED_CLASSES) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``n`` points with equal class probabilities; labels are 1..K."""
    rng = np.random.default_rng(seed)
    K = len(classes)
    y = rng.integers(1, K + 1, size=n)
    U = np.empty((n, 2))
    for k, axes in enumerate(classes):
        idx = np.flatnonzero(y == k + 1)
        for a, spec in enumerate(axes):
            U[idx, a] = _mixture_draw(spec, idx.size, rng)
    return U @ rotation(theta).T, y


def rotated_class_densities(points, theta: float = np.pi / 8, classes=ROTATED_CLASSES):
    """True class densities (m, K) at ``points`` in the observed coordinates."""
    U = np.asarray(points, dtype=float) @ rotation(theta)
    return np.stack(
        [_mixture_pdf(a0, U[:, 0]) * _mixture_pdf(a1, U[:, 1]) for a0, a1 in classes], axis=1
    )


def bayes_error(classes=ROTATED_CLASSES, half_width: float = 12.0, nodes: int = 2401) -> float:
    """Bayes error for equal priors by midpoint quadrature on a square grid.

    The class densities factorise in the rotated frame, and the Bayes error
    is rotation invariant, so the grid is laid out in that frame.
    """
    g = np.linspace(-half_width, half_width, nodes)
    dx = g[1] - g[0]
    K = len(classes)
    best = np.zeros((nodes, nodes))
    for a0, a1 in classes:
        best = np.maximum(best, np.outer(_mixture_pdf(a0, g), _mixture_pdf(a1, g)) / K)
    return float(1.0 - best.sum() * dx * dx)


def elongated(n: int, p: int = 20, seed=None, level_sd: float = 30.0, bump: float = 1.0,
              noise_sd: float = 0.6) -> tuple[np.ndarray, np.ndarray]:
    """Two-class 'hill or valley' curves on a shared random level.

    Row ``i`` is ``level_i + s_i * bump * shape + noise`` where ``s_i = +1``
    for class 1 (hill) and ``-1`` for class 2 (valley).  The random level
    dominates the total variance along the all-ones direction.
    """
    rng = np.random.default_rng(seed)
    y = rng.integers(1, 3, size=n)
    grid = np.linspace(-1.0, 1.0, p)
    centre = rng.uniform(-0.5, 0.5, size=n)
    shape = np.exp(-((grid[None, :] - centre[:, None]) ** 2) / (2 * 0.15 ** 2))
    sign = np.where(y == 1, 1.0, -1.0)
    level = rng.normal(0.0, level_sd, size=n)
    X = level[:, None] + sign[:, None] * bump * shape + rng.normal(0.0, noise_sd, size=(n, p))
    return X, y


def variance_share(X) -> float:
    """Fraction of total variance on the leading principal direction."""
    vals = np.linalg.eigvalsh(np.cov(np.asarray(X, dtype=float), rowvar=False))
    return float(vals[-1] / vals.sum())


def gaussian_blobs(n: int, p: int = 4, K: int = 3, separation: float = 2.5,
                   seed=None) -> tuple[np.ndarray, np.ndarray]:
    """Spherical Gaussian classes with means on scaled coordinate axes."""
    rng = np.random.default_rng(seed)
    y = rng.integers(1, K + 1, size=n)
    means = np.zeros((K, p))
    for k in range(1, K):
        means[k, (k - 1) % p] = separation
    return rng.standard_normal((n, p)) + means[y - 1], y


def rings(n: int, p: int = 4, seed=None) -> tuple[np.ndarray, np.ndarray]:
    """Two concentric noisy rings in the first two coordinates, noise elsewhere."""
    rng = np.random.default_rng(seed)
    y = rng.integers(1, 3, size=n)
    angle = rng.uniform(0, 2 * np.pi, size=n)
    radius = np.where(y == 1, 1.0, 2.5) + rng.normal(0, 0.3, size=n)
    X = rng.standard_normal((n, p))
    X[:, 0] = radius * np.cos(angle)
    X[:, 1] = radius * np.sin(angle)
    return X, y


def mixed_table(n: int, seed=None):
    """Raw table with continuous and categorical covariates, labels ``a``/``b``/``c``."""
    import pandas as pd

    rng = np.random.default_rng(seed)
    y = rng.integers(0, 3, size=n)
    colour = np.where(rng.random(n) < 0.7, np.array(["red", "green", "blue"])[y],
                      rng.choice(["red", "green", "blue"], size=n))
    frame = pd.DataFrame({
        "x1": rng.normal(y.astype(float), 1.0),
        "x2": rng.normal(0.0, 1.0 + y, size=n),
        "colour": colour,
        "flag": (rng.random(n) < 0.3 + 0.2 * y).astype(int),
    })
    return frame, pd.Series(np.array(["a", "b", "c"])[y], name="target")


def mini_corpus(seed: int = 0, scale: float = 1.0) -> dict:
    """Five small preprocessed datasets for end-to-end benchmark runs.

    ``scale`` multiplies every sample size.
    """
    from .data import make_dataset
    from .pipeline import PreprocessConfig, preprocess

    ss = np.random.SeedSequence(seed).spawn(5)
    size = lambda n: max(40, int(round(n * scale)))  # noqa: E731
    corpus = {}
    X, y = rotated_factorised(size(400), ss[0])
    corpus["rotated"] = make_dataset(X, y, name="rotated")
    X, y = elongated(size(300), p=10, seed=ss[1])
    corpus["elongated"] = make_dataset(X, y, name="elongated")
    X, y = gaussian_blobs(size(300), seed=ss[2])
    corpus["blobs"] = make_dataset(X, y, name="blobs")
    X, y = rings(size(300), seed=ss[3])
    corpus["rings"] = make_dataset(X, y, name="rings")
    frame, labels = mixed_table(size(300), ss[4])
    corpus["mixed"], _ = preprocess(frame, labels, PreprocessConfig(seed=seed), name="mixed")
    return corpus
