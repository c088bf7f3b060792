"""One-dimensional search: golden section, grid refinement and bisection."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section(f: Callable[[float], float], lo: float, hi: float,
                   tol: float = 1e-6, max_iter: int = 200) -> tuple[float, float]:
    """Maximize f on [lo, hi]; exact for unimodal f up to ``tol``.

    The endpoints are evaluated too, so boundary maxima are returned exactly.
    """
    a, b = float(lo), float(hi)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while b - a > tol and it < max_iter:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
        it += 1
    best = max([(fc, c), (fd, d), (f(lo), float(lo)), (f(hi), float(hi))],
               key=lambda t: (t[0], -t[1]))
    return best[1], best[0]


def scalar_maximize(f: Callable[[float], float], lo: float, hi: float,
                    method: str = "golden", tol: float = 1e-6,
                    grid: int = 16) -> tuple[float, float]:
    """Maximize a scalar function on [lo, hi].

    ``grid+refine`` evaluates ``grid + 1`` equally spaced points and runs a
    golden-section search on the two cells around the best one; for
    non-unimodal f the best point found is returned.
    """
    if method == "golden":
        return golden_section(f, lo, hi, tol)
    if method != "grid+refine":
        raise ValueError(f"unknown method {method!r}")
    xs = np.linspace(lo, hi, grid + 1)
    fs = np.array([f(x) for x in xs])
    i = int(np.argmax(fs))
    a, b = xs[max(i - 1, 0)], xs[min(i + 1, grid)]
    x, fx = golden_section(f, a, b, tol)
    if fs[i] > fx:
        return float(xs[i]), float(fs[i])
    return x, fx


def bisect_root(f: Callable[[float], float], lo: float, hi: float,
                tol: float = 1e-12, max_iter: int = 200) -> float:
    """Root of a monotone f with a sign change on [lo, hi]."""
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return float(lo)
    if fhi == 0:
        return float(hi)
    if (flo > 0) == (fhi > 0):
        raise ValueError(f"no sign change on [{lo}, {hi}]: f={flo:.3g}, {fhi:.3g}")
    a, b = float(lo), float(hi)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        m = 0.5 * (a + b)
        fm = f(m)
        if fm == 0:
            return m
        if (fm > 0) == (flo > 0):
            a, flo = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def largest_true(pred: Callable[[float], bool], lo: float, hi: float,
                 tol: float = 1e-9, max_iter: int = 200) -> float | None:
    """Largest x in [lo, hi] with pred(x) for a predicate true on a prefix.

    Returns None when pred(lo) is false. The returned point always satisfies
    the predicate.
    """
    if not pred(lo):
        return None
    if pred(hi):
        return float(hi)
    a, b = float(lo), float(hi)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        m = 0.5 * (a + b)
        if pred(m):
            a = m
        else:
            b = m
    return a
