"""Dense real matrix kernel: norms, power iteration, deflation and an SVD oracle.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 and ndim 2.
:func:`as_matrix` is the single validating entry point.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import _kernels
from .errors import DimensionTooLarge, NonConvergence, ZeroMatrix

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 1000
ORACLE_MAX_DIM = 64


def as_matrix(W) -> np.ndarray:
    """Return ``W`` as a finite float64 2-D array (copying only if needed)."""
    A = np.asarray(W, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={A.ndim}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"matrix dimensions must be positive, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix contains NaN or Inf")
    return A


@dataclass
class SingularTriplet:
    sigma: float
    u: np.ndarray
    v: np.ndarray

    def outer(self) -> np.ndarray:
        """``sigma * u v^T``."""
        return self.sigma * np.outer(self.u, self.v)


@dataclass
class SvdResult:
    triplets: list[SingularTriplet] = field(default_factory=list)

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([t.sigma for t in self.triplets])

    @property
    def U(self) -> np.ndarray:
        return np.column_stack([t.u for t in self.triplets])

    @property
    def V(self) -> np.ndarray:
        return np.column_stack([t.v for t in self.triplets])

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.sigmas) @ self.V.T


def _fix_sign(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # first non-negligible entry of u made positive; v follows
    scale = np.max(np.abs(u)) if u.size else 0.0
    if scale == 0.0:
        return u, v
    idx = np.flatnonzero(np.abs(u) > 1e-12 * scale)[0]
    if u[idx] < 0:
        return -u, -v
    return u, v


def frobenius_norm(W) -> float:
    W = as_matrix(W)
    # rescale so tiny entries do not underflow to a zero norm
    peak = float(np.max(np.abs(W)))
    if peak == 0.0:
        return 0.0
    return peak * float(np.sqrt(np.sum((W / peak) ** 2)))


def _random_unit(rng: np.random.Generator, n: int) -> np.ndarray:
    x = rng.standard_normal(n)
    return x / np.linalg.norm(x)


def power_iteration(
    W,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int = 0,
    u0: np.ndarray | None = None,
) -> SingularTriplet:
    """Top singular triplet of ``W`` by alternating power iteration.

    Iterates ``v = W^T u / |W^T u|``, ``u = W v / |W v|`` until the residual
    ``|W^T u - sigma v|`` drops below ``tol * sigma``. The starting vector is
    drawn from ``seed`` unless ``u0`` is given.

    Raises
    ------
    ZeroMatrix
        If ``W`` is identically zero.
    NonConvergence
        If the tolerance is not met within ``max_iter`` sweeps. The exception
        carries the last iterate in ``.triplet``.
    """
    W = as_matrix(W)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if not np.any(W):
        raise ZeroMatrix("power iteration on a zero matrix")
    if u0 is None:
        u0 = _random_unit(np.random.default_rng(seed), W.shape[0])
    empty_u = np.zeros((W.shape[0], 0))
    empty_v = np.zeros((W.shape[1], 0))
    sigma, u, v, n_iter, converged, residual = _kernels.power_sweeps(
        np.ascontiguousarray(W), np.asarray(u0, dtype=np.float64), empty_u, empty_v, tol, max_iter
    )
    if sigma == 0.0:
        # start vector landed in the left null space; retry from a fresh direction
        rng = np.random.default_rng([seed, 1])
        return power_iteration(W, tol, max_iter, u0=_random_unit(rng, W.shape[0]))
    u, v = _fix_sign(u, v)
    triplet = SingularTriplet(float(sigma), u, v)
    if not converged:
        raise NonConvergence(
            f"power iteration did not reach tol={tol:g} in {max_iter} sweeps "
            f"(residual/sigma={residual / sigma:.3g})",
            triplet=triplet,
            n_iter=n_iter,
            residual=float(residual),
        )
    return triplet


def power_sweep(W, u: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """One power-iteration sweep from a persistent ``u`` (training mode).

    Returns ``(sigma, u_new, v)`` with ``sigma = u_new^T W v``.
    """
    v = W.T @ u
    nv = np.linalg.norm(v)
    if nv == 0.0:
        raise ZeroMatrix("W^T u vanished during power sweep")
    v = v / nv
    w = W @ v
    sigma = np.linalg.norm(w)
    if sigma == 0.0:
        raise ZeroMatrix("W v vanished during power sweep")
    return float(sigma), w / sigma, v


def iter_singular_triplets(
    W,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int = 0,
    strict: bool = True,
) -> Iterator[SingularTriplet]:
    """Lazily yield singular triplets in descending order by deflation.

    Each stage runs power iteration on ``W - sum sigma_i u_i v_i^T`` with its
    iterates re-orthogonalized against the triplets already found. Stops when
    the deflated residual has Frobenius norm below ``tol * sigma_1`` or when
    ``min(W.shape)`` triplets have been produced. With ``strict=False`` a
    non-converged stage yields its best iterate with a warning.
    """
    W = as_matrix(W)
    if not np.any(W):
        raise ZeroMatrix("singular triplets of a zero matrix")
    m, n = W.shape
    rng = np.random.default_rng(seed)
    R = np.array(W, copy=True)
    U = np.zeros((m, 0))
    V = np.zeros((n, 0))
    sigma1 = None
    for _ in range(min(m, n)):
        if sigma1 is not None and np.sqrt(np.sum(R * R)) < tol * sigma1:
            return
        u0 = _random_unit(rng, m)
        sigma, u, v, n_iter, converged, residual = _kernels.power_sweeps(
            np.ascontiguousarray(R), u0, np.ascontiguousarray(U), np.ascontiguousarray(V), tol, max_iter
        )
        if sigma == 0.0:
            return
        u, v = _fix_sign(u, v)
        triplet = SingularTriplet(float(sigma), u, v)
        if not converged:
            msg = (
                f"power iteration stage {U.shape[1] + 1} did not reach tol={tol:g} in "
                f"{max_iter} sweeps (residual/sigma={residual / sigma:.3g})"
            )
            if strict:
                raise NonConvergence(msg, triplet=triplet, n_iter=n_iter, residual=float(residual))
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
        if sigma1 is None:
            sigma1 = triplet.sigma
        yield triplet
        R -= triplet.sigma * np.outer(u, v)
        U = np.column_stack([U, u])
        V = np.column_stack([V, v])


def top_k_svd(
    W,
    k: int,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int = 0,
    strict: bool = True,
) -> list[SingularTriplet]:
    """Top ``k`` singular triplets; fewer if ``W`` is numerically rank deficient."""
    W = as_matrix(W)
    if not 1 <= k <= min(W.shape):
        raise ValueError(f"k must lie in [1, {min(W.shape)}], got {k}")
    out = []
    for triplet in iter_singular_triplets(W, tol, max_iter, seed, strict):
        out.append(triplet)
        if len(out) == k:
            break
    return out


def deflate(W, triplets: list[SingularTriplet]) -> np.ndarray:
    """``W - sum sigma_i u_i v_i^T`` over ``triplets``."""
    R = np.array(as_matrix(W), copy=True)
    for t in triplets:
        R -= t.outer()
    return R


def _orthonormal_completion(Q: np.ndarray, dim: int, count: int) -> np.ndarray:
    # Gram-Schmidt of the canonical basis against the columns of Q
    basis = [Q[:, j] for j in range(Q.shape[1])]
    extra = []
    for i in range(dim):
        if len(extra) == count:
            break
        e = np.zeros(dim)
        e[i] = 1.0
        for _ in range(2):
            for b in basis + extra:
                e -= (b @ e) * b
        ne = np.linalg.norm(e)
        if ne > 1e-8:
            extra.append(e / ne)
    return np.column_stack(extra) if extra else np.zeros((dim, 0))


def full_svd_oracle(W) -> SvdResult:
    """Thin SVD by one-sided Jacobi rotations, for matrices with ``min(m, n) <= 64``.

    Intended as a test oracle independent of power iteration. Returns
    ``min(m, n)`` triplets sorted by descending sigma, zero sigmas included.
    """
    W = as_matrix(W)
    m, n = W.shape
    if min(m, n) > ORACLE_MAX_DIM:
        raise DimensionTooLarge(f"oracle SVD is capped at min(m, n) <= {ORACLE_MAX_DIM}, got {W.shape}")
    transposed = m < n
    A = np.ascontiguousarray(W.T if transposed else W)
    rows, cols = A.shape
    G, V, _, converged = _kernels.jacobi_svd(A, rows * np.finfo(float).eps, 100)
    if not converged:
        raise RuntimeError("one-sided Jacobi failed to converge in 100 sweeps")
    sigmas = np.sqrt(np.sum(G * G, axis=0))
    order = np.argsort(-sigmas, kind="stable")
    sigmas = sigmas[order]
    G = G[:, order]
    V = V[:, order]
    smax = sigmas[0] if sigmas.size else 0.0
    nonzero = sigmas > max(rows, cols) * np.finfo(float).eps * smax if smax > 0 else np.zeros(cols, bool)
    U = np.zeros((rows, cols))
    U[:, nonzero] = G[:, nonzero] / sigmas[nonzero]
    sigmas = np.where(nonzero, sigmas, 0.0)
    n_zero = int(np.count_nonzero(~nonzero))
    if n_zero:
        U[:, ~nonzero] = _orthonormal_completion(U[:, nonzero], rows, n_zero)
    if transposed:
        U, V = V, U
    triplets = []
    for i in range(cols):
        u, v = _fix_sign(U[:, i].copy(), V[:, i].copy())
        triplets.append(SingularTriplet(float(sigmas[i]), u, v))
    return SvdResult(triplets)


def spectral_norm(W, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER, seed: int = 0) -> float:
    """sigma_1 by power iteration, accepting the best iterate on non-convergence."""
    try:
        return power_iteration(W, tol, max_iter, seed).sigma
    except NonConvergence as err:
        warnings.warn(str(err), RuntimeWarning, stacklevel=2)
        return err.triplet.sigma


def stable_rank(W, tol: float = DEFAULT_TOL, max_iter: int = 100_000, seed: int = 0) -> float:
    """``||W||_F^2 / sigma_1(W)^2``."""
    W = as_matrix(W)
    if not np.any(W):
        raise ZeroMatrix("stable rank of a zero matrix")
    sigma1 = spectral_norm(W, tol, max_iter, seed)
    return float(np.sum(W * W) / sigma1**2)
