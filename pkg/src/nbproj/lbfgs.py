"""Limited-memory BFGS minimisation with a strong Wolfe line search."""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import line_search
from scipy.optimize._linesearch import LineSearchWarning

from .exceptions import NonFiniteObjective


@dataclass
class LBFGSResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    n_iter: int
    converged: bool
    line_search_failed: bool
    trace: list = field(default_factory=list)


class _Cached:
    """Evaluates ``fg(x) -> (f, g)`` once per distinct point."""

    def __init__(self, fg):
        self.fg = fg
        self.n_evals = 0
        self._memo: dict[bytes, tuple[float, np.ndarray]] = {}

    def __call__(self, x):
        key = x.tobytes()
        hit = self._memo.get(key)
        if hit is None:
            f, g = self.fg(x)
            self.n_evals += 1
            hit = (float(f), np.asarray(g, dtype=float).copy())
            if len(self._memo) > 32:
                self._memo.clear()
            self._memo[key] = hit
        return hit

    def f(self, x):
        return self(x)[0]

    def g(self, x):
        return self(x)[1]


def minimize_lbfgs(fg, x0, memory: int = 10, max_iter: int = 200, gtol: float = 1e-5,
                   c1: float = 1e-4, c2: float = 0.9) -> LBFGSResult:
    """Minimise a smooth function given ``fg(x) -> (value, gradient)``.

    Stops when the sup-norm of the gradient drops below ``gtol`` or after
    ``max_iter`` iterations.  If the line search cannot find a strong Wolfe
    step the current iterate is returned with ``line_search_failed`` set.
    ``trace`` holds the function value at the start and after every
    accepted step.
    """
    oracle = _Cached(fg)
    x = np.asarray(x0, dtype=float).ravel().copy()
    f, g = oracle(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise NonFiniteObjective("objective or gradient is not finite at the starting point")
    trace = [f]
    s_hist: deque = deque(maxlen=memory)
    y_hist: deque = deque(maxlen=memory)
    old_f = None
    failed = False
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g)) <= gtol:
            return LBFGSResult(x, f, g, it - 1, True, False, trace)
        d = -_two_loop(g, s_hist, y_hist)
        if not g @ d < 0:
            # Curvature pairs gave a non-descent direction; restart from steepest descent.
            s_hist.clear()
            y_hist.clear()
            d = -g
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LineSearchWarning)
            alpha, *_ , new_f, _, new_g = line_search(
                oracle.f, oracle.g, x, d, gfk=g, old_fval=f, old_old_fval=old_f,
                c1=c1, c2=c2, maxiter=30,
            )
        if alpha is None or new_f is None or not np.isfinite(new_f) or new_f > f:
            if s_hist:
                s_hist.clear()
                y_hist.clear()
                old_f = None
                continue
            failed = True
            break
        if new_g is None:
            new_g = oracle.g(x + alpha * d)
        step = alpha * d
        x_new = x + step
        y = new_g - g
        sy = step @ y
        if sy > 1e-12 * np.linalg.norm(step) * np.linalg.norm(y):
            s_hist.append(step)
            y_hist.append(y)
        old_f, f, g, x = f, new_f, new_g, x_new
        trace.append(f)
    else:
        it = max_iter
    converged = bool(np.max(np.abs(g)) <= gtol)
    return LBFGSResult(x, f, g, it, converged, failed, trace)


def _two_loop(g, s_hist, y_hist):
    q = g.copy()
    if not s_hist:
        return q / max(np.linalg.norm(q), 1.0)
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        q -= a * y
        alphas.append((rho, a))
    s, y = s_hist[-1], y_hist[-1]
    q *= (s @ y) / (y @ y)
    for (s, y), (rho, a) in zip(zip(s_hist, y_hist), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q
