"""Seeded property suites behind ``srnorm verify``.

Each suite draws ``n`` random cases from ``SeedSequence(seed)``, checks a set
of named properties against the oracles, and tallies pass/fail counts. The
first failing matrix of each property is kept as a witness.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import Infeasible
from .linalg import full_svd_oracle
from .measures import check_local_global, empirical_lip_global, lip_upper_bound, noise_sensitivity
from .nn import MlpModel
from .normalize import SrnConfig, srn_greedy, srn_optimal
from .oracles import family_min_distance, feasibility_bound, oracle_sigmas, oracle_srank

SUITES = ("theorem1", "claim1", "monotonicity", "noise", "lipschitz")


@dataclass
class SuiteResult:
    name: str
    counts: dict = field(default_factory=lambda: defaultdict(lambda: [0, 0]))
    witnesses: dict = field(default_factory=dict)

    def record(self, prop: str, ok: bool, witness=None) -> None:
        self.counts[prop][0 if ok else 1] += 1
        if not ok and prop not in self.witnesses and witness is not None:
            self.witnesses[prop] = np.asarray(witness, dtype=np.float64)

    @property
    def failed(self) -> int:
        return sum(f for _, f in self.counts.values())

    def lines(self) -> list[str]:
        return [f"suite={self.name} property={p} pass={c[0]} fail={c[1]}" for p, c in sorted(self.counts.items())]


def _cases(n: int, seed: int):
    for ss in np.random.SeedSequence(seed).spawn(n):
        yield np.random.default_rng(ss)


def _random_matrix(rng, lo=3, hi=12):
    return rng.standard_normal((int(rng.integers(lo, hi + 1)), int(rng.integers(lo, hi + 1))))


def suite_theorem1(n: int, seed: int, res: SuiteResult) -> None:
    for rng in _cases(n, seed):
        W = _random_matrix(rng)
        srank_w = oracle_srank(W)
        for r in (1.5, 2.5, 0.6 * srank_w):
            if r < 1.0:
                continue
            for k in range(0, min(4, min(W.shape))):
                if r >= srank_w:
                    out, rep = srn_optimal(W, SrnConfig(r=r, k=k))
                    res.record("identity", rep.identity and np.array_equal(out, W), W)
                    continue
                bound = feasibility_bound(W, k)
                if k >= 1 and abs(r - bound) < 1e-9:
                    continue
                expect_infeasible = k >= 1 and r < bound
                try:
                    out, rep = srn_optimal(W, SrnConfig(r=r, k=k))
                except Infeasible:
                    res.record("feasibility", expect_infeasible, W)
                    continue
                res.record("feasibility", not expect_infeasible, W)
                s_out = oracle_sigmas(out)
                res.record("target", abs(np.sum(s_out**2) / s_out[0] ** 2 - r) <= 1e-8, W)
                if k >= 1:
                    s_in = oracle_sigmas(W)
                    res.record("preservation", np.max(np.abs(s_out[:k] - s_in[:k])) <= 1e-8, W)
                oracle = family_min_distance(W, r, k)
                res.record("optimality", oracle is not None and rep.frobenius_distance <= oracle + 1e-7, W)
                res.record("gamma_order", rep.gamma2 <= 1.0 + 1e-12 and rep.gamma1 >= 1.0 - 1e-12, W)


def suite_claim1(n: int, seed: int, res: SuiteResult) -> None:
    for rng in _cases(n, seed):
        W = _random_matrix(rng, 4, 12)
        srank_w = oracle_srank(W)
        r = 1.0 + rng.random() * (srank_w - 1.0) * 0.999
        k = int(rng.integers(1, min(4, min(W.shape)) + 1))
        out, l = srn_greedy(W, r, k)
        s_out = oracle_sigmas(out)
        s_in = oracle_sigmas(W)
        res.record("target", abs(np.sum(s_out**2) / s_out[0] ** 2 - r) <= 1e-8, W)
        res.record("preservation", np.max(np.abs(s_out[:l] - s_in[:l])) <= 1e-8, W)
        if l == k and k < min(W.shape):
            opt, _ = srn_optimal(W, SrnConfig(r=r, k=k))
            res.record("agreement", np.sqrt(np.sum((opt - out) ** 2)) <= 1e-8 * np.sqrt(np.sum(W * W)), W)


def distinct_spectrum_matrix(rng, size: int = 8, min_gap: float = 0.05) -> np.ndarray:
    """Random orthogonal factors around a diagonal with well separated singular values."""
    gaps = min_gap + rng.random(size)
    s = np.cumsum(gaps)[::-1]
    U = np.linalg.qr(rng.standard_normal((size, size)))[0]
    V = np.linalg.qr(rng.standard_normal((size, size)))[0]
    return (U * s) @ V.T


def monotonicity_distances(W, kmax: int = 4):
    """Frobenius distances for k = 0..kmax at a target feasible for every k, or ``None``."""
    s = oracle_sigmas(W)
    lo = float(np.sum(s[:kmax] ** 2) / s[0] ** 2)
    hi = float(np.sum(s**2) / s[0] ** 2)
    if hi - lo < 1e-6:
        return None
    r = 0.5 * (lo + hi)
    return r, [srn_optimal(W, SrnConfig(r=r, k=k))[1].frobenius_distance for k in range(kmax + 1)]


def suite_monotonicity(n: int, seed: int, res: SuiteResult) -> None:
    for rng in _cases(n, seed):
        W = distinct_spectrum_matrix(rng)
        got = monotonicity_distances(W)
        if got is None:
            continue
        _, d = got
        res.record("nondecreasing_k", all(d[i] <= d[i + 1] + 1e-12 for i in range(1, len(d) - 1)), W)
        res.record("k0_le_k1", d[0] <= d[1] + 1e-12, W)


def suite_noise(n: int, seed: int, res: SuiteResult, n_noise: int = 20_000) -> None:
    for i, rng in enumerate(_cases(n, seed)):
        W = _random_matrix(rng, 2, 8)
        srank_w = oracle_srank(W)
        v1 = full_svd_oracle(W).triplets[0].v
        phi, se = noise_sensitivity(lambda X: X @ W.T, v1[None, :], n_noise, seed + i, batched=True,
                                    return_stderr=True)
        res.record("top_vector", abs(phi - srank_w) <= 3 * se, W)
        data = rng.standard_normal((5, W.shape[1]))
        phi, se = noise_sensitivity(lambda X: X @ W.T, data, n_noise, seed + i, batched=True, return_stderr=True)
        res.record("lower_bound", phi >= srank_w - 3 * se, W)


def suite_lipschitz(n: int, seed: int, res: SuiteResult, n_pairs: int = 1000) -> None:
    for i, rng in enumerate(_cases(n, seed)):
        d = int(rng.integers(2, 8))
        model = MlpModel.init([d, int(rng.integers(4, 16)), int(rng.integers(4, 16)), 3], seed=seed + i)
        for layer in model.layers:
            layer.b = 0.3 * rng.standard_normal(layer.b.shape)
        XA = rng.standard_normal((n_pairs, d))
        XB = rng.standard_normal((n_pairs, d))
        lg = empirical_lip_global(model, zip(XA, XB), batched=True)
        res.record("chain_bound", lg <= lip_upper_bound(model.weights) + 1e-6, model.layers[0].W)
        ok, _ = check_local_global(model, model.jacobian, rng.standard_normal((8, d)), 64, seed + i, batched=True)
        res.record("local_global", ok, model.layers[0].W)


_RUNNERS = {
    "theorem1": suite_theorem1,
    "claim1": suite_claim1,
    "monotonicity": suite_monotonicity,
    "noise": suite_noise,
    "lipschitz": suite_lipschitz,
}


def run_suite(name: str, n: int, seed: int = 0) -> SuiteResult:
    if name not in _RUNNERS:
        raise KeyError(name)
    res = SuiteResult(name)
    _RUNNERS[name](n, seed, res)
    return res
