"""Limited-memory BFGS with a strong-Wolfe line search.

The line search is the bracketing/zoom scheme of Nocedal & Wright
(Numerical Optimization, 2nd ed., algorithms 3.5 and 3.6), with bisection
inside the zoom phase. Every accepted step satisfies the sufficient-decrease
condition, so the objective is nonincreasing along the iterates.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


class LineSearchFailure(RuntimeError):
    pass


@dataclass
class LbfgsResult:
    x: np.ndarray
    f: float
    g: np.ndarray
    n_iter: int
    n_eval: int
    converged: bool
    line_search_failed: bool = False
    history: list = field(default_factory=list)  # f after every accepted step


def strong_wolfe(fun: Objective, x: np.ndarray, f0: float, g0: np.ndarray, d: np.ndarray,
                 alpha1: float = 1.0, c1: float = 1e-4, c2: float = 0.9,
                 max_bisect: int = 20, max_expand: int = 20):
    """Return ``(alpha, f, g, n_eval)`` for a step satisfying the strong Wolfe conditions."""
    dphi0 = float(g0 @ d)
    if dphi0 >= 0:
        raise LineSearchFailure("not a descent direction")
    n_eval = 0

    def phi(a):
        nonlocal n_eval
        n_eval += 1
        f, g = fun(x + a * d)
        return f, g, float(g @ d)

    def zoom(lo, f_lo, dphi_lo, hi):
        for _ in range(max_bisect):
            a = 0.5 * (lo + hi)
            f, g, dphi = phi(a)
            if f > f0 + c1 * a * dphi0 or f >= f_lo:
                hi = a
            else:
                if abs(dphi) <= -c2 * dphi0:
                    return a, f, g
                if dphi * (hi - lo) >= 0:
                    hi = lo
                lo, f_lo, dphi_lo = a, f, dphi
        raise LineSearchFailure(f"zoom did not satisfy the Wolfe conditions in {max_bisect} bisections")

    a_prev, f_prev, dphi_prev = 0.0, f0, dphi0
    a = alpha1
    for i in range(max_expand):
        f, g, dphi = phi(a)
        if not np.isfinite(f) or f > f0 + c1 * a * dphi0 or (i > 0 and f >= f_prev):
            if not np.isfinite(f):
                f = np.inf
            a, f, g = zoom(a_prev, f_prev, dphi_prev, a)
            return a, f, g, n_eval
        if abs(dphi) <= -c2 * dphi0:
            return a, f, g, n_eval
        if dphi >= 0:
            a, f, g = zoom(a, f, dphi, a_prev)
            return a, f, g, n_eval
        a_prev, f_prev, dphi_prev = a, f, dphi
        a *= 2.0
    raise LineSearchFailure("step expansion did not bracket a Wolfe point")


def _two_loop(g: np.ndarray, pairs: deque) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if pairs:
        s, y, _ = pairs[-1]
        q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def minimize(fun: Objective, x0, max_iter: int = 400, memory: int = 10, gtol: float = 1e-8,
             c1: float = 1e-4, c2: float = 0.9, max_bisect: int = 20) -> LbfgsResult:
    """Minimize ``fun`` (returning value and gradient) from ``x0``.

    Stops after ``max_iter`` iterations, when the gradient infinity-norm
    drops below ``gtol``, or when the line search fails; in the last case the
    best iterate so far is returned with ``line_search_failed`` set.
    """
    x = np.array(x0, dtype=np.float64, copy=True)
    f, g = fun(x)
    n_eval = 1
    pairs: deque = deque(maxlen=memory)
    history = [f]
    failed = False
    it = 0
    while it < max_iter:
        if np.max(np.abs(g)) < gtol:
            break
        d = _two_loop(g, pairs)
        if g @ d >= 0:
            pairs.clear()
            d = -g
        alpha1 = 1.0 if pairs else min(1.0, 1.0 / max(np.sum(np.abs(g)), 1e-300))
        try:
            alpha, f_new, g_new, ne = strong_wolfe(fun, x, f, g, d, alpha1, c1, c2, max_bisect)
        except LineSearchFailure as exc:
            log.info("L-BFGS stopped at iteration %d: %s", it, exc)
            failed = True
            break
        n_eval += ne
        s = alpha * d
        y = g_new - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y, 1.0 / sy))
        x = x + s
        f, g = f_new, g_new
        history.append(f)
        it += 1
    return LbfgsResult(x, f, g, it, n_eval, bool(np.max(np.abs(g)) < gtol), failed, history)
