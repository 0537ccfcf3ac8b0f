"""Stable rank normalization and the spectral-norm baselines.

The central routine is :func:`srn_optimal`, the closed-form Frobenius
projection onto matrices of a prescribed stable rank, optionally keeping the
top ``k`` singular values fixed. :func:`srn_greedy` is the incremental
variant that discovers how many leading singular values can be kept, and
:func:`layer_step` is the cheap single-sweep version used inside training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Infeasible, InvalidTarget, NonConvergence, ZeroMatrix
from .linalg import (
    DEFAULT_TOL,
    as_matrix,
    iter_singular_triplets,
    power_iteration,
    power_sweep,
    spectral_norm,
    top_k_svd,
)

# Budget for internal power iterations; results are accepted (with a warning)
# if it runs out.
INTERNAL_MAX_ITER = 100_000
_CLAMP = 1e-12
_DEGENERATE_RTOL = 1e-8


@dataclass(frozen=True)
class SrnConfig:
    """Target stable rank, given directly as ``r`` or as a ratio ``c`` of ``min(m, n)``."""

    r: float | None = None
    c: float | None = None
    k: int = 0

    def __post_init__(self):
        if (self.r is None) == (self.c is None):
            raise ValueError("exactly one of r and c must be given")
        if self.c is not None and not 0.0 < self.c <= 1.0:
            raise ValueError(f"c must lie in (0, 1], got {self.c}")
        if self.r is not None and self.r < 1.0:
            raise InvalidTarget(f"target stable rank must be >= 1, got {self.r}")
        if self.k < 0:
            raise ValueError(f"k must be nonnegative, got {self.k}")

    def target(self, shape: tuple[int, int]) -> float:
        if self.r is not None:
            return float(self.r)
        r = self.c * min(shape)
        if r < 1.0:
            raise InvalidTarget(f"c={self.c} gives r={r:g} < 1 for shape {shape}")
        return float(r)


@dataclass
class SpectralPartition:
    S1: np.ndarray
    S2: np.ndarray
    preserved_sigmas: list[float]


@dataclass
class NormalizationReport:
    gamma1: float
    gamma2: float
    achieved_srank: float
    frobenius_distance: float
    achieved_l: int
    feasible: bool
    degenerate_spectrum: bool = False
    identity: bool = False


def _has_ties(sigmas) -> bool:
    s = np.asarray(sigmas)
    if s.size < 2:
        return False
    return bool(np.any(s[:-1] - s[1:] <= _DEGENERATE_RTOL * s[0]))


def spectral_partition(W, k: int, tol: float = DEFAULT_TOL, seed: int = 0) -> SpectralPartition:
    """Split ``W`` into its top ``max(1, k)`` spectral part and the remainder."""
    W = as_matrix(W)
    kk = max(1, k)
    triplets = top_k_svd(W, kk, tol, INTERNAL_MAX_ITER, seed, strict=False)
    S1 = np.zeros_like(W)
    for t in triplets:
        S1 += t.outer()
    return SpectralPartition(S1, W - S1, [t.sigma for t in triplets])


def srn_optimal(
    W,
    cfg: SrnConfig,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
) -> tuple[np.ndarray, NormalizationReport]:
    """Closest matrix (in Frobenius norm) with stable rank ``r`` and, for ``k >= 1``,
    the same top-``k`` singular values as ``W``.

    The result is ``gamma1 * S1 + gamma2 * S2`` where ``S1`` is the rank-``max(1, k)``
    leading part of ``W`` and ``S2 = W - S1``. With
    ``gamma = sqrt(r sigma_1^2 - |S1|_F^2) / |S2|_F``:

    * ``k = 0``: ``gamma2 = (gamma + r - 1) / r`` and ``gamma1 = gamma2 / gamma``
      (``gamma1 = 1, gamma2 = 0`` when ``r = 1``);
    * ``k >= 1``: ``gamma1 = 1, gamma2 = gamma``, feasible only when
      ``r >= |S1|_F^2 / sigma_1^2``.

    If ``r >= srank(W)`` the input is returned unchanged and the report has
    ``identity=True``.

    Raises
    ------
    ZeroMatrix
    Infeasible
        ``k >= 1`` and ``r < |S1|_F^2 / sigma_1^2``.
    """
    W = as_matrix(W)
    if not np.any(W):
        raise ZeroMatrix("cannot normalize a zero matrix")
    r = cfg.target(W.shape)
    k = cfg.k
    p_max = min(W.shape)
    if k >= p_max:
        raise ValueError(f"k must be < min(m, n) = {p_max}, got {k}")
    kk = max(1, k)
    # one extra triplet only to detect ties at the partition boundary
    triplets = top_k_svd(W, min(kk + 1, p_max), tol, INTERNAL_MAX_ITER, seed, strict=False)
    degenerate = _has_ties([t.sigma for t in triplets])
    sigma1 = triplets[0].sigma
    fro2 = float(np.sum(W * W))
    srank_w = fro2 / sigma1**2

    if r >= srank_w:
        return W.copy(), NormalizationReport(1.0, 1.0, srank_w, 0.0, 0, False, degenerate, identity=True)

    preserved = triplets[:kk]
    S1 = np.zeros_like(W)
    for t in preserved:
        S1 += t.outer()
    S2 = W - S1
    s1_sq = float(sum(t.sigma**2 for t in preserved))
    s2_norm = float(np.sqrt(np.sum(S2 * S2)))

    arg = r * sigma1**2 - s1_sq
    if k >= 1 and (arg < -_CLAMP * sigma1**2 or len(preserved) < kk):
        bound = s1_sq / sigma1**2
        raise Infeasible(
            f"infeasible: r < ||S1||_F^2 / sigma1^2 (r={r:.12g}, bound={bound:.12g}, k={k})",
            r=r,
            bound=bound,
        )
    arg = max(arg, 0.0)

    if s2_norm < _CLAMP * np.sqrt(fro2):
        out = S1.copy()
        dist = float(np.sqrt(np.sum((W - out) ** 2)))
        return out, NormalizationReport(1.0, 0.0, s1_sq / sigma1**2, dist, kk, False, degenerate)

    gamma = np.sqrt(arg) / s2_norm
    if k == 0:
        if gamma == 0.0:
            gamma1, gamma2 = 1.0, 0.0
        else:
            gamma2 = (gamma + r - 1.0) / r
            gamma1 = gamma2 / gamma
    else:
        gamma1, gamma2 = 1.0, gamma

    out = gamma1 * S1 + gamma2 * S2
    achieved = _srank_near(out, triplets[0].u, tol)
    dist = float(np.sqrt(np.sum((W - out) ** 2)))
    report = NormalizationReport(float(gamma1), float(gamma2), achieved, dist, k, True, degenerate)
    return out, report


def _srank_near(A: np.ndarray, u0: np.ndarray, tol: float) -> float:
    # stable rank of A, warm-starting power iteration at a known top direction
    try:
        sigma = power_iteration(A, tol, INTERNAL_MAX_ITER, u0=u0).sigma
    except NonConvergence as err:
        sigma = err.triplet.sigma
    return float(np.sum(A * A) / sigma**2)


def _greedy(W, r, k, tol, seed):
    W = as_matrix(W)
    if not np.any(W):
        raise ZeroMatrix("cannot normalize a zero matrix")
    if k < 1:
        raise ValueError(f"greedy SRN needs k >= 1, got {k}")
    if k > min(W.shape):
        raise ValueError(f"k must be <= min(m, n) = {min(W.shape)}, got {k}")
    fro2 = float(np.sum(W * W))
    S1 = np.zeros_like(W)
    beta = fro2
    eta = 0.0
    l = 0
    sigma1 = None
    for i, t in enumerate(iter_singular_triplets(W, tol, INTERNAL_MAX_ITER, seed, strict=False)):
        if i == k:
            break
        if sigma1 is None:
            sigma1 = t.sigma
            srank_w = fro2 / sigma1**2
            if not 1.0 <= r < srank_w:
                raise InvalidTarget(f"greedy SRN needs 1 <= r < srank(W) = {srank_w:.12g}, got r={r:.12g}")
        if r >= (t.sigma**2 + eta) / sigma1**2:
            S1 += t.outer()
            eta += t.sigma**2
            beta -= t.sigma**2
            l += 1
        else:
            break
    eta = r * sigma1**2 - eta
    scale = float(np.sqrt(eta / beta))
    return S1 + scale * (W - S1), l, scale


def srn_greedy(W, r: float, k: int, tol: float = DEFAULT_TOL, seed: int = 0) -> tuple[np.ndarray, int]:
    """Greedy stable rank normalization keeping as many of the top ``k`` singular values as the target allows.

    Singular triplets are computed one at a time; the ``i``-th is added to the
    preserved part while ``r >= (sigma_i^2 + eta) / sigma_1^2`` (``eta`` being the
    energy already preserved). The remainder is then rescaled so that the
    stable rank is exactly ``r``. Returns ``(W_hat, l)`` with ``l <= k`` the
    number of preserved singular values.

    Raises
    ------
    InvalidTarget
        Unless ``1 <= r < srank(W)``.
    """
    out, l, _ = _greedy(W, r, k, tol, seed)
    return out, l


def greedy_scale(W, r: float, k: int, tol: float = DEFAULT_TOL, seed: int = 0) -> tuple[np.ndarray, int, float]:
    """:func:`srn_greedy` that also returns the remainder scale ``sqrt(eta / beta)``."""
    return _greedy(W, r, k, tol, seed)


def truncate_rank(W, t: int, tol: float = DEFAULT_TOL, seed: int = 0) -> np.ndarray:
    """Best rank-``t`` approximation (truncated SVD)."""
    W = as_matrix(W)
    if not np.any(W):
        raise ZeroMatrix("cannot truncate a zero matrix")
    out = np.zeros_like(W)
    for trip in top_k_svd(W, t, tol, INTERNAL_MAX_ITER, seed, strict=False):
        out += trip.outer()
    return out


def spectral_normalize_approx(W, tol: float = DEFAULT_TOL, seed: int = 0) -> np.ndarray:
    """``W / sigma_1(W)``."""
    W = as_matrix(W)
    if not np.any(W):
        raise ZeroMatrix("cannot spectrally normalize a zero matrix")
    return W / spectral_norm(W, tol, INTERNAL_MAX_ITER, seed)


def spectral_clip_optimal(W, s: float, tol: float = DEFAULT_TOL, seed: int = 0) -> np.ndarray:
    """Nearest matrix with spectral norm at most ``s``: every singular value above ``s`` is set to ``s``."""
    W = as_matrix(W)
    if s <= 0:
        raise ValueError(f"s must be positive, got {s}")
    if not np.any(W):
        raise ZeroMatrix("cannot clip a zero matrix")
    clipped = np.zeros_like(W)
    rest = np.array(W, copy=True)
    for t in iter_singular_triplets(W, tol, INTERNAL_MAX_ITER, seed, strict=False):
        if t.sigma < s:
            break
        clipped += s * np.outer(t.u, t.v)
        rest -= t.outer()
    return clipped + rest


@dataclass
class LayerStep:
    """Forward quantities of one training-time normalization step.

    ``scale`` is ``None`` when the stable-rank branch did not fire (either the
    layer already satisfies the target or only spectral normalization is
    requested); otherwise ``w_f = u v^T + scale * (W / sigma - u v^T)``.
    """

    w_f: np.ndarray
    u: np.ndarray
    v: np.ndarray
    sigma: float
    scale: float | None
    hat_norm: float
    hat_unit: np.ndarray | None = None


def layer_step(
    W,
    r: float,
    u: np.ndarray,
    n_sweeps: int = 1,
    spectral_only: bool = False,
    power_tol: float | None = None,
    max_sweeps: int = 10_000,
) -> LayerStep:
    """Spectral then stable-rank normalization of a layer from a persistent ``u``.

    By default ``n_sweeps`` power sweeps are run. With ``power_tol`` set, sweeps
    continue (up to ``max_sweeps``) until ``|W^T u - sigma v| <= power_tol * sigma``.
    """
    W = np.asarray(W, dtype=np.float64)
    if r < 1.0:
        raise InvalidTarget(f"r must be >= 1, got {r}")
    for _ in range(n_sweeps):
        sigma, u, v = power_sweep(W, u)
    if power_tol is not None:
        done = n_sweeps
        while done < max_sweeps and np.linalg.norm(W.T @ u - sigma * v) > power_tol * sigma:
            sigma, u, v = power_sweep(W, u)
            done += 1
    w_f = W / sigma
    hat = w_f - np.outer(u, v)
    hat_norm = float(np.sqrt(np.sum(hat * hat)))
    rho = np.sqrt(r - 1.0)
    if spectral_only or hat_norm <= rho:
        return LayerStep(w_f, u, v, sigma, None, hat_norm)
    scale = rho / hat_norm
    return LayerStep(np.outer(u, v) + scale * hat, u, v, sigma, float(scale), hat_norm, hat / hat_norm)


def srn_layer_step(W, r: float, u_state: np.ndarray | None = None, seed: int = 0, n_sweeps: int = 1):
    """One SN + SRN update of a dense layer. Returns ``(W_f, new_u_state)``.

    ``u_state`` is the caller-owned power-iteration vector; a random unit
    vector seeded by ``seed`` is used when it is ``None``.
    """
    W = as_matrix(W)
    if not np.any(W):
        raise ZeroMatrix("cannot normalize a zero matrix")
    if u_state is None:
        x = np.random.default_rng(seed).standard_normal(W.shape[0])
        u_state = x / np.linalg.norm(x)
    elif len(u_state) != W.shape[0]:
        raise ValueError(f"u_state has length {len(u_state)}, expected {W.shape[0]}")
    step = layer_step(W, r, np.asarray(u_state, dtype=np.float64), n_sweeps)
    return step.w_f, step.u


def layer_step_backward(step: LayerStep, W: np.ndarray, grad_wf: np.ndarray) -> np.ndarray:
    """Pull ``dL/dW_f`` back to ``dL/dW`` treating ``u`` and ``v`` as constants.

    ``sigma = u^T W v`` and the stable-rank rescale factor are differentiated.
    """
    G = grad_wf
    if step.scale is not None:
        G = step.scale * (G - np.sum(G * step.hat_unit) * step.hat_unit)
    sigma = step.sigma
    return G / sigma - (np.sum(G * W) / sigma**2) * np.outer(step.u, step.v)
