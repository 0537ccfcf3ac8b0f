"""Diagnostics: empirical Lipschitz estimates, noise sensitivity and margin-normalized complexity measures.

Functions that take a callable ``f`` accept a per-example map ``(d,) -> (k,)``.
Pass ``batched=True`` when ``f`` maps a row batch ``(n, d) -> (n, k)`` instead;
:class:`srnorm.nn.MlpModel` instances are batched.

Random draws use one ``SeedSequence`` substream per data point or sampler, so
results do not depend on how work is chunked.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels
from .errors import DegeneratePair, ZeroMargin, ZeroMatrix, ZeroOutput
from .linalg import as_matrix, spectral_norm

_NOISE_CHUNK = 16384


def _apply(f: Callable, X: np.ndarray, batched: bool) -> np.ndarray:
    if batched:
        return np.atleast_2d(np.asarray(f(X), dtype=np.float64))
    return np.array([np.atleast_1d(np.asarray(f(x), dtype=np.float64)) for x in X])


def lip_upper_bound(weights: list, tol: float = 1e-10, seed: int = 0) -> float:
    """Product of layer spectral norms (valid for 1-Lipschitz activations)."""
    if not weights:
        raise ValueError("need at least one weight matrix")
    bound = 1.0
    for W in weights:
        W = as_matrix(W)
        if not np.any(W):
            raise ZeroMatrix("zero layer in Lipschitz bound")
        bound *= spectral_norm(W, tol, 100_000, seed)
    return bound


def _norm_rows(D: np.ndarray, order) -> np.ndarray:
    return np.linalg.norm(D, ord=order, axis=1)


def pair_ratios(f: Callable, XA, XB, p=2, q=2, batched: bool = False) -> np.ndarray:
    """``|f(a) - f(b)|_q / |a - b|_p`` for each row pair; raises on identical inputs."""
    XA = np.atleast_2d(np.asarray(XA, dtype=np.float64))
    XB = np.atleast_2d(np.asarray(XB, dtype=np.float64))
    same = np.all(XA == XB, axis=1)
    if np.any(same):
        raise DegeneratePair(f"pair {int(np.argmax(same))} has identical inputs")
    FA = _apply(f, XA, batched)
    FB = _apply(f, XB, batched)
    if p == 2 and q == 2:
        return _kernels.pair_ratios(
            np.ascontiguousarray(FA), np.ascontiguousarray(FB), np.ascontiguousarray(XA), np.ascontiguousarray(XB)
        )
    return _norm_rows(FA - FB, q) / _norm_rows(XA - XB, p)


def empirical_lip_global(f: Callable, pairs, p=2, q=2, batched: bool = False) -> float:
    """Largest difference quotient of ``f`` over the given input pairs."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one pair")
    XA = np.array([a for a, _ in pairs], dtype=np.float64)
    XB = np.array([b for _, b in pairs], dtype=np.float64)
    return float(np.max(pair_ratios(f, XA, XB, p, q, batched)))


def empirical_lip_local(f: Callable, x, jacobian_fn: Callable) -> float:
    """Spectral norm of the Jacobian of ``f`` at ``x`` (``f`` itself is not evaluated)."""
    J = np.atleast_2d(np.asarray(jacobian_fn(np.asarray(x, dtype=np.float64)), dtype=np.float64))
    if not np.any(J):
        return 0.0
    return spectral_norm(J, max_iter=100_000)


@dataclass
class LipHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    percentile_90: float
    percentile_95: float
    n_pairs: int
    ratios: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.csv_text())

    def csv_text(self) -> str:
        lines = ["bin_lo,bin_hi,count"]
        for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts):
            lines.append(f"{lo:.17g},{hi:.17g},{int(c)}")
        lines.append(f"# p90={self.percentile_90:.17g} p95={self.percentile_95:.17g} n={self.n_pairs}")
        return "\n".join(lines) + "\n"


def gaussian_sampler(dim: int, scale: float = 1.0, mean=None) -> Callable:
    """Sampler drawing ``n`` isotropic Gaussian rows."""
    center = np.zeros(dim) if mean is None else np.asarray(mean, dtype=np.float64)

    def sample(rng: np.random.Generator, n: int) -> np.ndarray:
        return center + scale * rng.standard_normal((n, dim))

    return sample


def dataset_sampler(X) -> Callable:
    """Sampler drawing rows of ``X`` uniformly with replacement."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))

    def sample(rng: np.random.Generator, n: int) -> np.ndarray:
        return X[rng.integers(0, X.shape[0], n)]

    return sample


def histogram_from_ratios(ratios: np.ndarray, bins: int = 50) -> LipHistogram:
    ratios = np.asarray(ratios, dtype=np.float64)
    top = float(ratios.max())
    counts, edges = np.histogram(ratios, bins=bins, range=(0.0, top if top > 0 else 1.0))
    return LipHistogram(
        edges,
        counts,
        float(np.percentile(ratios, 90)),
        float(np.percentile(ratios, 95)),
        int(ratios.size),
        ratios,
    )


def elhist(
    f: Callable,
    sampler_a: Callable,
    sampler_b: Callable,
    n_pairs: int = 2000,
    bins: int = 50,
    seed: int = 0,
    batched: bool = False,
    exclude_duplicates: bool = False,
) -> LipHistogram:
    """Histogram of difference quotients over ``n_pairs`` pairs ``(a, b)``.

    ``sampler_a`` and ``sampler_b`` are called as ``sampler(rng, n)`` and must
    return ``n`` input rows. Bins are uniform over ``[0, max ratio]``. A pair
    with identical inputs raises ``DegeneratePair`` unless
    ``exclude_duplicates`` is set, in which case it is dropped (and
    ``n_pairs`` in the result counts only the kept pairs).
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    ss_a, ss_b = np.random.SeedSequence(seed).spawn(2)
    XA = np.atleast_2d(sampler_a(np.random.default_rng(ss_a), n_pairs))
    XB = np.atleast_2d(sampler_b(np.random.default_rng(ss_b), n_pairs))
    if exclude_duplicates:
        keep = ~np.all(XA == XB, axis=1)
        if not np.any(keep):
            raise DegeneratePair("every sampled pair has identical inputs")
        XA, XB = XA[keep], XB[keep]
    return histogram_from_ratios(pair_ratios(f, XA, XB, batched=batched), bins)


def noise_sensitivity_at(f: Callable, x, n_noise: int, rng: np.random.Generator, batched: bool = False):
    """Monte Carlo mean and standard error of ``|f(x + eta |x|) - f(x)|^2 / |f(x)|^2``, ``eta ~ N(0, I)``."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    nx = np.linalg.norm(x)
    if nx == 0.0:
        raise ValueError("noise sensitivity needs a nonzero input")
    fx = _apply(f, x[None, :], batched)[0]
    denom = float(fx @ fx)
    if denom == 0.0:
        raise ZeroOutput("f(x) = 0; noise sensitivity undefined")
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_noise:
        m = min(_NOISE_CHUNK, n_noise - done)
        eta = rng.standard_normal((m, x.size))
        diff = _apply(f, x + nx * eta, batched) - fx
        vals = np.sum(diff * diff, axis=1) / denom
        total += float(vals.sum())
        total_sq += float(vals @ vals)
        done += m
    mean = total / n_noise
    var = max(total_sq / n_noise - mean * mean, 0.0) * n_noise / max(n_noise - 1, 1)
    return mean, float(np.sqrt(var / n_noise))


def noise_sensitivity(
    f: Callable,
    dataset,
    n_noise: int = 10_000,
    seed: int = 0,
    batched: bool = False,
    return_stderr: bool = False,
):
    """Largest per-point noise sensitivity over ``dataset``.

    With ``return_stderr=True`` returns ``(value, stderr)`` where the standard
    error belongs to the maximizing point.
    """
    X = np.atleast_2d(np.asarray(dataset, dtype=np.float64))
    streams = np.random.SeedSequence(seed).spawn(X.shape[0])
    best, best_se = -np.inf, 0.0
    for x, ss in zip(X, streams):
        mean, se = noise_sensitivity_at(f, x, n_noise, np.random.default_rng(ss), batched)
        if mean > best:
            best, best_se = mean, se
    return (best, best_se) if return_stderr else best


def margin(logits, true_class: int) -> float:
    """True-class logit minus the largest competing logit."""
    z = np.asarray(logits, dtype=np.float64).reshape(-1)
    if z.size < 2:
        raise ValueError("margin needs at least two logits")
    others = np.delete(z, true_class)
    return float(z[true_class] - others.max())


def l21_norm(W) -> float:
    """Sum of column Euclidean norms."""
    W = as_matrix(W)
    return float(np.sum(np.sqrt(np.sum(W * W, axis=0))))


def _spectral_terms(weights):
    if not weights:
        raise ValueError("need at least one weight matrix")
    out = []
    for W in weights:
        W = as_matrix(W)
        if not np.any(W):
            raise ZeroMatrix("zero layer in complexity measure")
        out.append((W, spectral_norm(W, max_iter=100_000)))
    return out


def spec_fro(weights, margin_value: float) -> float:
    """``prod |W_i|_2^2 * sum srank(W_i) / margin^2``; ``inf`` for a nonpositive margin."""
    terms = _spectral_terms(weights)
    if margin_value <= 0:
        return float("inf")
    prod = np.prod([s**2 for _, s in terms])
    total = sum(np.sum(W * W) / s**2 for W, s in terms)
    return float(prod * total / margin_value**2)


def spec_l1(weights, margin_value: float) -> float:
    """``prod |W_i|_2^2 * (sum (|W_i|_{2,1} / |W_i|_2)^{2/3})^3 / margin^2``; ``inf`` for a nonpositive margin."""
    terms = _spectral_terms(weights)
    if margin_value <= 0:
        return float("inf")
    prod = np.prod([s**2 for _, s in terms])
    total = sum((l21_norm(W) / s) ** (2.0 / 3.0) for W, s in terms)
    return float(prod * total**3 / margin_value**2)


def margin_jacobians(model, x, y: int):
    """Margin at ``x`` plus, for each layer, its input ``h_i`` and ``d margin / d h_i``."""
    from .nn import forward

    x = np.asarray(x, dtype=np.float64).reshape(-1)
    logits, cache = forward(model, x)
    z = logits.copy()
    z[y] = -np.inf
    rival = int(np.argmax(z))
    gamma = float(logits[y] - logits[rival])
    g = np.zeros_like(logits)
    g[y] += 1.0
    g[rival] -= 1.0
    hs, js = [], []
    for i in range(len(model.layers) - 1, -1, -1):
        J = cache["weights"][i].T @ g
        hs.append(cache["inputs"][i][0])
        js.append(J)
        if i:
            g = J * (cache["pre"][i - 1][0] > 0)
    return gamma, hs[::-1], js[::-1]


def jac_norm_measure(model, x, y: int) -> float:
    """``sum_i |h_i| |d margin / d h_i| / margin`` with ``h_i`` the input of layer ``i``."""
    gamma, hs, js = margin_jacobians(model, x, y)
    if gamma == 0.0:
        raise ZeroMargin("margin is zero at this input")
    return float(sum(np.linalg.norm(h) * np.linalg.norm(J) for h, J in zip(hs, js)) / gamma)


@dataclass
class ComplexityReport:
    spec_fro: float
    spec_l1: float
    jac_norm: float
    margin: float
    lip_upper_bound: float


def complexity_report(model, x, y: int) -> ComplexityReport:
    logits = model(np.asarray(x, dtype=np.float64))
    gamma = margin(logits, y)
    weights = model.weights
    jac = jac_norm_measure(model, x, y) if gamma != 0 else float("inf")
    return ComplexityReport(spec_fro(weights, gamma), spec_l1(weights, gamma), jac, gamma, lip_upper_bound(weights))


def complexity_histograms(model, X, y, bins: int = 50):
    """Histograms of log complexity measures over correctly classified points.

    Returns ``(dict name -> (counts, edges), n_excluded)``; points with margin
    ``<= 0`` are excluded and counted.
    """
    reports = [complexity_report(model, xi, int(yi)) for xi, yi in zip(np.atleast_2d(X), y)]
    kept = [r for r in reports if r.margin > 0]
    out = {}
    for name in ("spec_fro", "spec_l1", "jac_norm"):
        vals = np.log([getattr(r, name) for r in kept]) if kept else np.array([])
        out[name] = np.histogram(vals, bins=bins) if vals.size else (np.zeros(bins, int), np.zeros(bins + 1))
    return out, len(reports) - len(kept)


def check_local_global(
    f: Callable,
    jacobian_fn: Callable,
    dataset,
    n_segment_samples: int = 64,
    seed: int = 0,
    slack: float = 1e-6,
    batched: bool = False,
):
    """Check that every pairwise difference quotient is bounded by the largest
    Jacobian norm sampled along the segment joining the pair.

    Segment points are stratified: one uniform draw inside each of
    ``n_segment_samples`` equal sub-intervals. Returns ``(ok, witness)``;
    ``witness`` is ``(i, j, global_ratio, local_max)`` for the first violating
    pair, else ``None``.
    """
    X = np.atleast_2d(np.asarray(dataset, dtype=np.float64))
    if X.shape[0] < 2:
        raise ValueError("need at least two points")
    rng = np.random.default_rng(seed)
    F = _apply(f, X, batched)
    for i in range(X.shape[0] - 1):
        for j in range(i + 1, X.shape[0]):
            dx = np.linalg.norm(X[i] - X[j])
            if dx == 0.0:
                continue
            ratio = np.linalg.norm(F[i] - F[j]) / dx
            ts = (np.arange(n_segment_samples) + rng.random(n_segment_samples)) / n_segment_samples
            local = max(empirical_lip_local(f, X[i] + t * (X[j] - X[i]), jacobian_fn) for t in ts)
            if ratio > local + slack:
                return False, (i, j, float(ratio), float(local))
    return True, None
