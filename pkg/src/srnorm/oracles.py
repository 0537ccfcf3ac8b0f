"""Brute-force reference computations used by the verify suites and the tests.

Everything here works from the Jacobi SVD oracle and explicit searches, never
from the closed forms in :mod:`srnorm.normalize`.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .linalg import full_svd_oracle

GRID_POINTS = 2001


def oracle_sigmas(W) -> np.ndarray:
    return full_svd_oracle(W).sigmas


def oracle_srank(W) -> float:
    s = oracle_sigmas(W)
    return float(np.sum(s**2) / s[0] ** 2)


def _srank_of(head: np.ndarray, tail: np.ndarray, g1: float, g2: float) -> float:
    s = np.concatenate([g1 * head, g2 * tail])
    return float(np.sum(s**2) / np.max(s) ** 2)


def _srank_grid(head: np.ndarray, tail: np.ndarray, g2: np.ndarray) -> np.ndarray:
    # stable rank of (head, g2 * tail) for each g2, g1 fixed at 1
    energy = np.sum(head**2) + np.outer(g2**2, tail**2).sum(axis=1)
    top = np.maximum(head[0], g2 * tail[0])
    return energy / top**2


def _roots(fn, lo: float, hi: float, grid_fn, n: int = GRID_POINTS) -> list[float]:
    xs = np.linspace(lo, hi, n)
    vals = grid_fn(xs)
    roots = [float(x) for x, v in zip(xs, vals) if v == 0.0]
    for i in range(n - 1):
        if vals[i] * vals[i + 1] < 0:
            roots.append(brentq(fn, xs[i], xs[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps))
    return roots


def family_min_distance(W, r: float, k: int) -> float | None:
    """Smallest ``|W - (g1 S1 + g2 S2)|_F`` over members with stable rank ``r``.

    ``S1`` holds the top ``max(1, k)`` spectral terms. For ``k >= 1`` the
    family is restricted to ``g1 = 1`` and ``g2 * sigma_{k+1} <= sigma_k`` so the
    top-``k`` spectrum is kept. Members are located by a 2001-point grid on
    ``g2`` (or on ``g2 / g1`` for ``k = 0``) with bracketed root refinement; for
    ``k = 0`` the scale ``g1`` is then searched on a grid and refined.
    Returns ``None`` when no member exists.
    """
    s = oracle_sigmas(W)
    kk = max(1, k)
    head, tail = s[:kk], s[kk:]
    if tail.size == 0 or tail[0] == 0.0:
        return None
    tail_sq = float(np.sum(tail**2))

    def dist(g1, g2):
        return float(np.sqrt(np.sum(((1 - g1) * head) ** 2) + (1 - g2) ** 2 * tail_sq))

    if k >= 1:
        hi = head[-1] / tail[0]
        roots = _roots(lambda g: _srank_of(head, tail, 1.0, g) - r, 0.0, hi,
                       lambda g: _srank_grid(head, tail, g) - r)
        return min((dist(1.0, g) for g in roots), default=None)

    hi = 10.0 * head[0] / tail[0]
    best = None
    for t in _roots(lambda t: _srank_of(head, tail, 1.0, t) - r, 0.0, hi, lambda t: _srank_grid(head, tail, t) - r):
        g1_hi = 3.0 * max(1.0, 1.0 / t) if t > 0 else 3.0
        grid = np.linspace(0.0, g1_hi, GRID_POINTS)
        vals = np.sqrt(np.outer((1 - grid) ** 2, head**2).sum(axis=1) + (1 - grid * t) ** 2 * tail_sq)
        i = int(np.argmin(vals))
        lo_b, hi_b = grid[max(i - 1, 0)], grid[min(i + 1, GRID_POINTS - 1)]
        res = minimize_scalar(lambda g: dist(g, g * t), bounds=(lo_b, hi_b), method="bounded",
                              options={"xatol": 1e-14})
        d = min(vals[i], float(res.fun))
        best = d if best is None else min(best, d)
    return best


def feasibility_bound(W, k: int) -> float:
    """``|S1|_F^2 / sigma_1^2`` for the top ``max(1, k)`` terms."""
    s = oracle_sigmas(W)
    return float(np.sum(s[: max(1, k)] ** 2) / s[0] ** 2)
