"""Pure-numpy implementations of the hot kernels.

Each function here has a compiled twin in ``_kernels_numba`` with the same
signature and return layout. ``srnorm._kernels`` picks one at import time.
"""

import numpy as np


def _project_out(x, basis):
    if basis.shape[1]:
        x = x - basis @ (basis.T @ x)
    return x


def power_sweeps(W, u0, U_prev, V_prev, tol, max_iter):
    """Alternating power iteration on ``W`` restricted to the complement of
    ``U_prev`` / ``V_prev``.

    Returns ``(sigma, u, v, n_iter, converged, residual)`` where ``residual``
    is ``||W^T u - sigma v||`` at the last iterate.
    """
    u = _project_out(u0.astype(np.float64), U_prev)
    nu = np.linalg.norm(u)
    n = W.shape[1]
    if nu == 0.0:
        return 0.0, u, np.zeros(n), 0, True, 0.0
    u = u / nu
    t = _project_out(W.T @ u, V_prev)
    sigma = 0.0
    v = np.zeros(n)
    residual = np.inf
    for it in range(1, max_iter + 1):
        nv = np.linalg.norm(t)
        if nv == 0.0:
            return 0.0, u, v, it, True, 0.0
        v = t / nv
        w = _project_out(W @ v, U_prev)
        sigma = np.linalg.norm(w)
        if sigma == 0.0:
            return 0.0, u, v, it, True, 0.0
        u = w / sigma
        t = _project_out(W.T @ u, V_prev)
        residual = np.linalg.norm(t - sigma * v)
        if residual <= tol * sigma:
            return sigma, u, v, it, True, residual
    return sigma, u, v, max_iter, False, residual


def jacobi_svd(A, tol, max_sweeps):
    """One-sided (Hestenes) Jacobi on the columns of ``A`` (``m >= n``).

    Returns ``(G, V, n_sweeps, converged)`` where the columns of ``G`` are
    mutually orthogonal and ``A @ V == G``.
    """
    G = np.array(A, dtype=np.float64, copy=True)
    n = G.shape[1]
    V = np.eye(n)
    # columns below this squared norm are rounding residue and never rotated
    floor = np.finfo(np.float64).eps ** 2 * float(np.sum(G * G))
    for sweep in range(1, max_sweeps + 1):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                gi = G[:, i]
                gj = G[:, j]
                alpha = gi @ gi
                beta = gj @ gj
                gamma = gi @ gj
                if gamma == 0.0 or min(alpha, beta) <= floor or abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                G[:, i], G[:, j] = c * gi - s * gj, s * gi + c * gj
                vi = V[:, i].copy()
                vj = V[:, j].copy()
                V[:, i] = c * vi - s * vj
                V[:, j] = s * vi + c * vj
        if not rotated:
            return G, V, sweep, True
    return G, V, max_sweeps, False


def pair_ratios(FA, FB, XA, XB):
    """Row-wise ``||FA_i - FB_i||_2 / ||XA_i - XB_i||_2``.

    Rows with identical inputs produce ``nan``.
    """
    num = np.linalg.norm(FA - FB, axis=1)
    den = np.linalg.norm(XA - XB, axis=1)
    out = np.full(num.shape, np.nan)
    ok = den > 0.0
    out[ok] = num[ok] / den[ok]
    return out
