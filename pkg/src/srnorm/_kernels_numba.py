"""Numba-compiled kernels. Signatures mirror ``_kernels_numpy``."""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _matvec(W, x, out):
    m, n = W.shape
    for i in range(m):
        acc = 0.0
        for j in range(n):
            acc += W[i, j] * x[j]
        out[i] = acc


@njit(cache=True)
def _rmatvec(W, x, out):
    m, n = W.shape
    for j in range(n):
        out[j] = 0.0
    for i in range(m):
        xi = x[i]
        for j in range(n):
            out[j] += W[i, j] * xi


@njit(cache=True)
def _norm(x):
    acc = 0.0
    for i in range(x.shape[0]):
        acc += x[i] * x[i]
    return math.sqrt(acc)


@njit(cache=True)
def _project_out(x, basis):
    # classical Gram-Schmidt against an orthonormal basis; coefficients from the unmodified x
    k = basis.shape[1]
    if k == 0:
        return
    coef = np.zeros(k)
    for c in range(k):
        acc = 0.0
        for i in range(x.shape[0]):
            acc += basis[i, c] * x[i]
        coef[c] = acc
    for c in range(k):
        for i in range(x.shape[0]):
            x[i] -= coef[c] * basis[i, c]


@njit(cache=True)
def power_sweeps(W, u0, U_prev, V_prev, tol, max_iter):
    m, n = W.shape
    u = u0.astype(np.float64).copy()
    _project_out(u, U_prev)
    v = np.zeros(n)
    nu = _norm(u)
    if nu == 0.0:
        return 0.0, u, v, 0, True, 0.0
    for i in range(m):
        u[i] /= nu
    t = np.empty(n)
    w = np.empty(m)
    _rmatvec(W, u, t)
    _project_out(t, V_prev)
    sigma = 0.0
    residual = np.inf
    for it in range(1, max_iter + 1):
        nv = _norm(t)
        if nv == 0.0:
            return 0.0, u, v, it, True, 0.0
        for j in range(n):
            v[j] = t[j] / nv
        _matvec(W, v, w)
        _project_out(w, U_prev)
        sigma = _norm(w)
        if sigma == 0.0:
            return 0.0, u, v, it, True, 0.0
        for i in range(m):
            u[i] = w[i] / sigma
        _rmatvec(W, u, t)
        _project_out(t, V_prev)
        acc = 0.0
        for j in range(n):
            d = t[j] - sigma * v[j]
            acc += d * d
        residual = math.sqrt(acc)
        if residual <= tol * sigma:
            return sigma, u, v, it, True, residual
    return sigma, u, v, max_iter, False, residual


@njit(cache=True)
def jacobi_svd(A, tol, max_sweeps):
    G = A.astype(np.float64).copy()
    m, n = G.shape
    V = np.eye(n)
    floor = 0.0
    for r in range(m):
        for c in range(n):
            floor += G[r, c] * G[r, c]
    floor *= 2.220446049250313e-16 ** 2
    for sweep in range(1, max_sweeps + 1):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for r in range(m):
                    gi = G[r, i]
                    gj = G[r, j]
                    alpha += gi * gi
                    beta += gj * gj
                    gamma += gi * gj
                if gamma == 0.0 or min(alpha, beta) <= floor or abs(gamma) <= tol * math.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                for r in range(m):
                    gi = G[r, i]
                    gj = G[r, j]
                    G[r, i] = c * gi - s * gj
                    G[r, j] = s * gi + c * gj
                for r in range(n):
                    vi = V[r, i]
                    vj = V[r, j]
                    V[r, i] = c * vi - s * vj
                    V[r, j] = s * vi + c * vj
        if not rotated:
            return G, V, sweep, True
    return G, V, max_sweeps, False


@njit(cache=True)
def pair_ratios(FA, FB, XA, XB):
    n = FA.shape[0]
    out = np.empty(n)
    for p in range(n):
        num = 0.0
        for j in range(FA.shape[1]):
            d = FA[p, j] - FB[p, j]
            num += d * d
        den = 0.0
        for j in range(XA.shape[1]):
            d = XA[p, j] - XB[p, j]
            den += d * d
        if den > 0.0:
            out[p] = math.sqrt(num) / math.sqrt(den)
        else:
            out[p] = np.nan
    return out
