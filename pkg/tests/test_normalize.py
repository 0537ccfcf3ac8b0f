import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srnorm.errors import Infeasible, InvalidTarget, ZeroMatrix
from srnorm.linalg import power_iteration, stable_rank
from srnorm.normalize import (
    SrnConfig,
    greedy_scale,
    layer_step,
    layer_step_backward,
    spectral_clip_optimal,
    spectral_normalize_approx,
    spectral_partition,
    srn_greedy,
    srn_layer_step,
    srn_optimal,
    truncate_rank,
)
from srnorm.oracles import family_min_distance, feasibility_bound, oracle_sigmas, oracle_srank

from conftest import gauss

R2 = 1 / math.sqrt(2)
# Frozen from LAPACK: residual sqrt(sum_{i>2} sigma_i^2) of gauss(2, 6, 4)
TRUNC_RESIDUAL_6x4_SEED2 = 1.5194166422306257
MEDIAN_SIGMA_6x6_SEED19 = 2.1138001325327673


def fro(A):
    return float(np.linalg.norm(A))


def srank_of(A):
    s = oracle_sigmas(A)
    return float(np.sum(s**2) / s[0] ** 2)


class TestConfig:
    def test_exactly_one_of_r_c(self):
        with pytest.raises(ValueError):
            SrnConfig()
        with pytest.raises(ValueError):
            SrnConfig(r=2, c=0.5)

    def test_ratio_target(self):
        assert SrnConfig(c=0.5).target((10, 6)) == 3.0
        with pytest.raises(InvalidTarget):
            SrnConfig(c=0.1).target((4, 4))

    def test_bad_values(self):
        with pytest.raises(InvalidTarget):
            SrnConfig(r=0.5)
        with pytest.raises(ValueError):
            SrnConfig(c=1.5)
        with pytest.raises(ValueError):
            SrnConfig(r=2, k=-1)


def test_partition_invariants():
    W = gauss(4, 7, 5)
    for k in (0, 1, 3):
        p = spectral_partition(W, k)
        assert fro(p.S1 + p.S2 - W) <= 1e-9 * fro(W)
        assert abs(np.sum(p.S1 * p.S2)) <= 1e-8 * fro(W) ** 2
        assert len(p.preserved_sigmas) == max(1, k)


class TestSrnOptimal:
    def test_identity3_k1(self):
        out, rep = srn_optimal(np.eye(3), SrnConfig(r=2, k=1))
        assert oracle_sigmas(out) == pytest.approx([1, R2, R2], abs=1e-9)
        assert srank_of(out) == pytest.approx(2, abs=1e-9)
        assert rep.degenerate_spectrum

    def test_identity3_k0(self):
        out, rep = srn_optimal(np.eye(3), SrnConfig(r=2, k=0))
        a = (math.sqrt(2) + 1) / 2
        assert oracle_sigmas(out) == pytest.approx([a, a / math.sqrt(2), a / math.sqrt(2)], abs=1e-9)
        assert srank_of(out) == pytest.approx(2, abs=1e-9)

    def test_diagonal_input_elementwise(self):
        # distinct spectrum so no subspace rotation is possible
        W = np.diag([3.0, 2.0, 1.0])
        out, rep = srn_optimal(W, SrnConfig(r=1.5, k=1))
        g = math.sqrt(1.5 * 9 - 9) / math.sqrt(5)
        assert out == pytest.approx(np.diag([3.0, 2 * g, g]), abs=1e-9)
        assert rep.gamma1 == 1.0 and rep.gamma2 == pytest.approx(g, rel=1e-12)

    def test_r_equal_one(self):
        out, rep = srn_optimal(np.eye(3), SrnConfig(r=1, k=0))
        assert (rep.gamma1, rep.gamma2) == (1.0, 0.0)
        assert srank_of(out) == pytest.approx(1, abs=1e-9)
        assert oracle_sigmas(out)[0] == pytest.approx(1, abs=1e-9)

    def test_identity_when_target_exceeds_srank(self):
        W = gauss(5, 6, 6)  # srank ~2.143
        out, rep = srn_optimal(W, SrnConfig(r=2.5, k=1))
        assert rep.identity and np.array_equal(out, W)
        assert rep.achieved_srank == pytest.approx(oracle_srank(W), rel=1e-9)

    def test_seeded_against_family_grid(self):
        W = gauss(5, 12, 12)  # srank ~3.86, so r=2.5 is an active target
        out, rep = srn_optimal(W, SrnConfig(r=2.5, k=1))
        assert rep.feasible
        assert rep.frobenius_distance <= family_min_distance(W, 2.5, 1) + 1e-7
        assert srank_of(out) == pytest.approx(2.5, abs=1e-8)

    def test_infeasible(self):
        W = np.diag([1.0, 0.99, 0.98, 0.1])
        assert feasibility_bound(W, 3) > 2.5
        with pytest.raises(Infeasible) as info:
            srn_optimal(W, SrnConfig(r=2.5, k=3))
        assert info.value.bound == pytest.approx(feasibility_bound(W, 3), rel=1e-9)
        assert "infeasible" in str(info.value)

    def test_zero_matrix(self):
        with pytest.raises(ZeroMatrix):
            srn_optimal(np.zeros((3, 3)), SrnConfig(r=1.5))

    def test_k_too_large(self):
        with pytest.raises(ValueError):
            srn_optimal(np.eye(3), SrnConfig(r=2, k=3))

    @pytest.mark.parametrize("seed", range(30))
    def test_invariants_random(self, seed):
        rng = np.random.default_rng(1000 + seed)
        W = rng.standard_normal((int(rng.integers(3, 10)), int(rng.integers(3, 10))))
        srank_w = oracle_srank(W)
        r = 1 + 0.7 * (srank_w - 1)
        s_in = oracle_sigmas(W)
        for k in range(min(3, min(W.shape))):
            bound = feasibility_bound(W, k)
            if k >= 1 and r < bound:
                with pytest.raises(Infeasible):
                    srn_optimal(W, SrnConfig(r=r, k=k))
                continue
            out, rep = srn_optimal(W, SrnConfig(r=r, k=k))
            assert srank_of(out) == pytest.approx(r, abs=1e-8)
            assert rep.achieved_srank == pytest.approx(r, abs=1e-8)
            assert rep.gamma2 <= 1 + 1e-12 <= rep.gamma1 + 2e-12
            if k >= 1:
                assert np.max(np.abs(oracle_sigmas(out)[:k] - s_in[:k])) <= 1e-8

    def test_monotone_in_k(self):
        from srnorm.verify import distinct_spectrum_matrix, monotonicity_distances

        rng = np.random.default_rng(3)
        for _ in range(10):
            got = monotonicity_distances(distinct_spectrum_matrix(rng))
            if got is None:
                continue
            _, d = got
            assert all(d[i] <= d[i + 1] + 1e-12 for i in range(len(d) - 1))


class TestGreedy:
    def test_identity3(self):
        out, l = srn_greedy(np.eye(3), 2, 1)
        assert l == 1
        assert oracle_sigmas(out) == pytest.approx([1, R2, R2], abs=1e-9)

    def test_rejects_target_above_srank(self):
        with pytest.raises(InvalidTarget):
            srn_greedy(np.diag([2.0, 1.0, 1.0]), 3, 1)

    def test_seeded_example_precondition(self):
        # gauss(13, 8, 8) has srank ~1.83, below the requested target
        with pytest.raises(InvalidTarget):
            srn_greedy(gauss(13, 8, 8), 3, 4)

    def test_seeded(self):
        W = gauss(13, 12, 12)  # srank ~4.67
        out, l = srn_greedy(W, 3, 4)
        assert 1 <= l <= 4
        assert srank_of(out) == pytest.approx(3, abs=1e-8)
        assert np.max(np.abs(oracle_sigmas(out)[:l] - oracle_sigmas(W)[:l])) <= 1e-8

    def test_scale_matches_formula(self):
        W = np.diag([3.0, 2.0, 1.0])
        out, l, scale = greedy_scale(W, 1.5, 2)
        # guard admits sigma_2 since (4 + 9) / 9 <= 1.5, leaving eta = 0.5 and beta = 1
        assert l == 2
        assert scale == pytest.approx(math.sqrt(0.5), rel=1e-9)
        assert out == pytest.approx(np.diag([3.0, 2.0, math.sqrt(0.5)]), abs=1e-8)
        _, l, _ = greedy_scale(W, 1.2, 2)
        assert l == 1

    def test_k_zero_rejected(self):
        with pytest.raises(ValueError):
            srn_greedy(np.eye(3), 2, 0)

    @pytest.mark.parametrize("seed", range(20))
    def test_agrees_with_optimal_when_all_kept(self, seed):
        rng = np.random.default_rng(seed)
        W = rng.standard_normal((8, 6))
        r = 1 + 0.9 * (oracle_srank(W) - 1)
        out, l = srn_greedy(W, r, 2)
        assert srank_of(out) == pytest.approx(r, abs=1e-8)
        if l == 2:
            opt, _ = srn_optimal(W, SrnConfig(r=r, k=2))
            assert fro(opt - out) <= 1e-8 * fro(W)


class TestBaselines:
    def test_truncate_identity(self):
        out = truncate_rank(np.eye(3), 2)
        assert oracle_sigmas(out) == pytest.approx([1, 1, 0], abs=1e-12)
        assert stable_rank(out) == pytest.approx(2, rel=1e-12)
        assert np.allclose(out @ out, out, atol=1e-12)

    def test_truncate_diag(self):
        assert truncate_rank(np.diag([3.0, 2.0, 1.0]), 1) == pytest.approx(np.diag([3.0, 0, 0]), abs=1e-8)

    def test_truncate_residual(self):
        W = gauss(2, 6, 4)
        assert fro(W - truncate_rank(W, 2)) == pytest.approx(TRUNC_RESIDUAL_6x4_SEED2, rel=1e-8)

    def test_sn(self):
        assert spectral_normalize_approx(np.diag([4.0, 2.0])) == pytest.approx(np.diag([1.0, 0.5]), abs=1e-12)
        assert spectral_normalize_approx(np.eye(3)) == pytest.approx(np.eye(3), abs=1e-12)
        W = gauss(17, 5, 5)
        out = spectral_normalize_approx(W)
        assert oracle_sigmas(out)[0] == pytest.approx(1, abs=1e-8)
        assert stable_rank(out) == pytest.approx(stable_rank(W), abs=1e-9)

    def test_clip(self):
        out = spectral_clip_optimal(np.diag([3.0, 2.0, 0.5]), 1.0)
        assert out == pytest.approx(np.diag([1.0, 1.0, 0.5]), abs=1e-8)
        W = gauss(3, 4, 4)
        assert np.array_equal(spectral_clip_optimal(W, oracle_sigmas(W)[0] + 1), W)

    def test_clip_seeded_median(self):
        W = gauss(19, 6, 6)
        s = oracle_sigmas(W)
        assert float(np.median(s)) == pytest.approx(MEDIAN_SIGMA_6x6_SEED19, rel=1e-12)
        out = spectral_clip_optimal(W, MEDIAN_SIGMA_6x6_SEED19)
        assert np.max(np.abs(oracle_sigmas(out) - np.minimum(s, MEDIAN_SIGMA_6x6_SEED19))) <= 1e-8

    @pytest.mark.parametrize("seed", range(10))
    def test_clip_beats_uniform_scaling(self, seed):
        W = gauss(300 + seed, 6, 5)
        s = oracle_sigmas(W)
        target = 0.5 * (s[0] + s[-1])
        clip = spectral_clip_optimal(W, target)
        assert fro(W - clip) < fro(W - W * target / s[0])


class TestLayerStep:
    def test_early_return(self):
        W = np.diag([2.0, 1.0, 1.0])
        out, u = srn_layer_step(W, 2, np.array([1.0, 0.0, 0.0]))
        assert out == pytest.approx(np.diag([1.0, 0.5, 0.5]), abs=1e-12)
        assert np.allclose(u, [1, 0, 0])

    def test_branch_fires(self):
        out, _ = srn_layer_step(2 * np.eye(3), 2, np.array([1.0, 0.0, 0.0]))
        assert out == pytest.approx(np.diag([1.0, R2, R2]), abs=1e-12)

    def test_seeded_below_target_is_sn_only(self):
        W = gauss(23, 10, 8)  # srank ~2.57 < 3: the rescale branch does not fire
        u = None
        for i in range(500):
            out, u = srn_layer_step(W, 3, u, seed=0)
        assert oracle_sigmas(out)[0] == pytest.approx(1, abs=1e-4)
        assert srank_of(out) == pytest.approx(oracle_srank(W), abs=1e-4)
        assert srank_of(out) <= 3

    def test_seeded_active_target(self):
        W = gauss(23, 10, 8)
        u = None
        for _ in range(500):
            out, u = srn_layer_step(W, 2, u, seed=0)
        assert oracle_sigmas(out)[0] == pytest.approx(1, abs=1e-4)
        assert srank_of(out) == pytest.approx(2, abs=1e-4)

    @pytest.mark.parametrize("seed", range(10))
    def test_equivalence_with_optimal_k1(self, seed):
        W = gauss(400 + seed, 7, 6)
        r = 1 + 0.5 * (oracle_srank(W) - 1)
        u = power_iteration(W, tol=1e-13, max_iter=200_000).u
        out, _ = srn_layer_step(W, r, u)
        ref, _ = srn_optimal(spectral_normalize_approx(W), SrnConfig(r=r, k=1))
        assert fro(out - ref) <= 1e-7 * fro(W)

    def test_u_state_checks(self):
        with pytest.raises(ValueError):
            srn_layer_step(np.eye(3), 2, np.ones(2))
        with pytest.raises(ZeroMatrix):
            srn_layer_step(np.zeros((3, 3)), 2)

    @pytest.mark.parametrize("r,seed", [(1.0, 0), (1.5, 1), (2.0, 2), (50.0, 3)])
    def test_backward_matches_finite_differences(self, r, seed):
        rng = np.random.default_rng(seed)
        W = rng.standard_normal((5, 4))
        u0 = rng.standard_normal(5)
        u0 /= np.linalg.norm(u0)
        step = layer_step(W, r, u0)
        G = rng.standard_normal(W.shape)
        u, v = step.u, step.v
        uv = np.outer(u, v)

        def frozen(A):
            # forward with the power-iteration vectors held fixed
            wf = A / (u @ A @ v)
            hat = wf - uv
            n = np.linalg.norm(hat)
            return wf if step.scale is None else uv + math.sqrt(r - 1) * hat / n

        assert frozen(W) == pytest.approx(step.w_f, abs=1e-12)
        analytic = layer_step_backward(step, W, G)
        numeric = np.zeros_like(W)
        h = 1e-6
        for idx in np.ndindex(W.shape):
            E = np.zeros_like(W)
            E[idx] = h
            numeric[idx] = (np.sum(G * frozen(W + E)) - np.sum(G * frozen(W - E))) / (2 * h)
        assert np.max(np.abs(analytic - numeric)) <= 1e-6 * max(1.0, np.max(np.abs(numeric)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 0.95))
def test_srn_scale_invariant(seed, frac):
    W = gauss(seed, 6, 5)
    r = 1 + frac * (oracle_srank(W) - 1)
    a, _ = srn_optimal(W, SrnConfig(r=r, k=1))
    b, _ = srn_optimal(3.5 * W, SrnConfig(r=r, k=1))
    assert fro(3.5 * a - b) <= 1e-8 * fro(b)
