import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heavyshrink.thresholds import (
    BlockConfig,
    RetentionMask,
    ThresholdPlan,
    above,
    apply_plan,
    haar_block_mean,
    level_thresholds,
    noise_exceedance,
    soft_threshold,
    universal_threshold,
    vertical_block_estimate,
    vertical_keep,
)
from heavyshrink.wavelet import CoeffPyramid, forward_dwt, inverse_dwt

from oracles import bisect_universal_root, quad_exceedance

# frozen from the bisection/quadrature oracle in tests/oracles.py
UNIVERSAL_ROOT_1024 = 4.053245112224602

reals = st.floats(-1e6, 1e6, allow_nan=False)
lams = st.floats(0, 1e6, allow_nan=False)


def random_pyramid(rng, h, j0=0, scale=1.0):
    return CoeffPyramid(j0, rng.standard_normal(2**j0) * scale, [rng.standard_normal(2**j) * scale for j in range(j0, h)])


class TestSoftThreshold:
    def test_examples(self):
        assert soft_threshold(2.0, 1.0) == 1.0
        assert soft_threshold(-0.5, 1.0) == 0.0
        for x in (-3.0, 0.0, 7.0):
            assert soft_threshold(x, 0.0) == x

    def test_negative_threshold(self):
        with pytest.raises(ValueError):
            soft_threshold(1.0, -0.1)

    def test_infinite_threshold(self):
        np.testing.assert_array_equal(soft_threshold(np.array([-5.0, 0.0, 3.0]), np.inf), 0.0)

    @given(x1=reals, x2=reals, lam=lams)
    def test_non_expansive(self, x1, x2, lam):
        assert abs(soft_threshold(x1, lam) - soft_threshold(x2, lam)) <= abs(x1 - x2) * (1 + 1e-15)

    @given(x=reals, lam=lams)
    def test_shrinkage(self, x, lam):
        t = soft_threshold(x, lam)
        assert abs(t) <= abs(x)
        # x - (x - lam) rounds at the scale of |x|
        assert abs(t - x) <= lam + 4 * np.finfo(float).eps * abs(x)


class TestPlans:
    def test_zero_plan_identity(self):
        pyr = random_pyramid(np.random.default_rng(0), 6)
        out = apply_plan(pyr, ThresholdPlan.uniform(0, 6, 0.0))
        np.testing.assert_array_equal(out.flat(), pyr.flat())

    def test_infinite_plan(self):
        pyr = random_pyramid(np.random.default_rng(1), 6)
        out = apply_plan(pyr, ThresholdPlan.uniform(0, 6, math.inf))
        np.testing.assert_array_equal(out.scaling, pyr.scaling)
        for d in out.details:
            np.testing.assert_array_equal(d, 0.0)

    def test_elementwise(self):
        pyr = random_pyramid(np.random.default_rng(2), 7, j0=2)
        out = apply_plan(pyr, ThresholdPlan.uniform(2, 7, 0.3))
        for d_out, d_in in zip(out.details, pyr.details):
            np.testing.assert_array_equal(d_out, [soft_threshold(v, 0.3) for v in d_in])

    def test_shape_mismatch(self):
        pyr = random_pyramid(np.random.default_rng(3), 5)
        with pytest.raises(ValueError):
            apply_plan(pyr, ThresholdPlan.uniform(0, 6, 0.1))

    def test_discard_above(self):
        plan = ThresholdPlan.uniform(0, 5, 0.2, discard_above=2)
        np.testing.assert_array_equal(plan.effective(), [0.2, 0.2, 0.2, np.inf, np.inf])
        with pytest.raises(ValueError):
            ThresholdPlan.uniform(0, 5, 0.2, discard_above=7)

    def test_level_thresholds(self):
        plan = level_thresholds(256, 0, 1.0, 1.0)
        assert plan.threshold(0) == 0.0
        assert plan.threshold(4) == pytest.approx(0.125, abs=1e-15)
        double = level_thresholds(256, 0, 1.0, 2.0)
        np.testing.assert_allclose(double.effective(), 2 * plan.effective(), rtol=1e-15)

    def test_level_thresholds_coarsest(self):
        plan = level_thresholds(64, 3, 1.0, 1.0, coarsest=1)
        assert plan.j0 == 1 and plan.h == 6
        np.testing.assert_array_equal(plan.effective()[:3], 0.0)

    def test_level_thresholds_validation(self):
        with pytest.raises(ValueError):
            level_thresholds(256, 0, 0.0, 1.0)
        with pytest.raises(ValueError):
            level_thresholds(100, 0, 1.0, 1.0)


class TestUniversalThreshold:
    def test_oracle_frozen(self):
        assert bisect_universal_root(1024) == pytest.approx(UNIVERSAL_ROOT_1024, abs=1e-10)

    def test_n1024(self):
        assert universal_threshold(1024) == pytest.approx(UNIVERSAL_ROOT_1024 + 1, abs=1e-9)

    def test_monotone(self):
        vals = [universal_threshold(2**k) for k in range(4, 18)]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_log_ratio(self):
        n = 2**20
        r = (universal_threshold(n) - 1) / math.sqrt(2 * math.log(n))
        assert 0.9 <= r <= 1.3

    @pytest.mark.parametrize("n", [16, 1024, 2**16, 2**20])
    def test_consistency(self, n):
        t = universal_threshold(n) - 1
        assert quad_exceedance(t) == pytest.approx(1 / n, rel=1e-8)

    @pytest.mark.parametrize("t", [0.0, 0.5, 2.0, 4.0, 6.0])
    def test_closed_form(self, t):
        assert noise_exceedance(t) == pytest.approx(quad_exceedance(t), rel=1e-10)


class TestAbove:
    def test_self(self):
        assert above(3, 5, 3, 5, 0)

    def test_parent(self):
        for j, k in [(3, 5), (4, 1), (5, 31)]:
            assert above(j - 1, k // 2, j, k, 0)
            assert above(j - 1, math.ceil(k / 2), j, k, 0, one_based=True) if k >= 1 else True

    def test_not_below(self):
        assert not above(4, 0, 3, 0, 5)

    @pytest.mark.parametrize("one_based", [False, True])
    @pytest.mark.parametrize("J", [0, 1, 2])
    def test_closure_exhaustive(self, one_based, J):
        # ancestors of a finest index i: if (j1-ancestor) is above (j, k), so is every coarser ancestor
        h = 6
        off = 1 if one_based else 0

        def anc(i, jj):
            q = 2 ** (h - jj)
            return -(-i // q) if one_based else i // q

        for i in range(off, 2**h + off):
            for j in range(h + 1):
                for k in range(off, 2**j + off):
                    for j1 in range(j + 1):
                        if not above(j1, anc(i, j1), j, k, J, one_based=one_based):
                            continue
                        for j2 in range(j1):
                            assert above(j2, anc(i, j2), j, k, J, one_based=one_based)


def brute_mask(abs_details, lam, J, j0=0):
    """Keep (j, k) iff some large (jp, kp) with jp >= j has (j, k) above it."""
    h = j0 + len(abs_details)
    large = [(j, k) for j in range(j0, h) for k in np.flatnonzero(abs_details[j - j0] >= lam)]
    out = []
    for j in range(j0, h):
        out.append(np.array([any(above(j, k, jp, kp, J) for jp, kp in large) for k in range(2**j)], dtype=bool))
    return out


class TestVerticalBlock:
    def test_all_small(self):
        pyr = random_pyramid(np.random.default_rng(4), 6, scale=0.1)
        est, mask = vertical_block_estimate(pyr, BlockConfig(1, 10.0))
        assert mask.count() == 0
        for d in est.details:
            np.testing.assert_array_equal(d, 0.0)
        np.testing.assert_array_equal(est.scaling, pyr.scaling)

    @pytest.mark.parametrize("J", [0, 1, 2])
    def test_single_spike(self, J):
        h = 8
        pyr = CoeffPyramid(0, np.zeros(1), [np.zeros(2**j) for j in range(h)])
        pyr.details[-1][77] = 5.0
        est, mask = vertical_block_estimate(pyr, BlockConfig(J, 1.0))
        assert mask.level(h - 1)[77]
        assert mask.count() <= (2 * J + 1) * h
        for j in range(h):
            assert mask.level(j)[77 >> (h - 1 - j)]
        np.testing.assert_array_equal(est.flat(), pyr.flat())

    @pytest.mark.parametrize("h", [2, 3, 4, 5, 6])
    @pytest.mark.parametrize("J", [0, 1, 2])
    def test_matches_brute_force(self, h, J):
        rng = np.random.default_rng(100 * h + J)
        for _ in range(20):
            abs_d = [np.abs(rng.standard_normal(2**j)) for j in range(h)]
            got = vertical_keep(abs_d, 1.8, J)
            for g, b in zip(got, brute_mask(abs_d, 1.8, J)):
                np.testing.assert_array_equal(g, b)

    @pytest.mark.parametrize("h", [3, 5, 6])
    def test_upward_closed(self, h):
        rng = np.random.default_rng(h)
        for J in (0, 1, 2):
            _, mask = vertical_block_estimate(random_pyramid(rng, h), BlockConfig(J, 1.5))
            for j in range(1, h):
                kept = mask.level(j)
                parent = mask.level(j - 1)
                assert np.all(parent[np.flatnonzero(kept) >> 1])

    def test_batch_axis(self):
        rng = np.random.default_rng(5)
        abs_d = [np.abs(rng.standard_normal((4, 2**j))) for j in range(5)]
        got = vertical_keep(abs_d, 1.5, 1)
        for r in range(4):
            row = vertical_keep([a[r] for a in abs_d], 1.5, 1)
            for g, b in zip(got, row):
                np.testing.assert_array_equal(g[r], b)

    def test_neighbors_widen(self):
        abs_d = [np.zeros(2**j) for j in range(5)]
        abs_d[-1][5] = 3.0
        plain = vertical_keep(abs_d, 1.0, 0)
        wide = vertical_keep(abs_d, 1.0, 0, neighbors=1)
        assert wide[-1][[4, 5, 6]].all() and plain[-1].sum() == 1

    def test_mask_csv(self, tmp_path):
        mask = RetentionMask(0, [np.array([True]), np.array([False, True])])
        mask.to_csv(tmp_path / "m.csv")
        assert (tmp_path / "m.csv").read_text() == "level,index,kept\n0,0,1\n1,0,0\n1,1,1\n"

    def test_config_validation(self):
        with pytest.raises(ValueError):
            BlockConfig(-1, 1.0)
        with pytest.raises(ValueError):
            BlockConfig(0, -1.0)


class TestHaarBlockMean:
    def test_finest(self):
        x = np.random.default_rng(6).standard_normal(16)
        np.testing.assert_array_equal(haar_block_mean(x, 3), x)

    def test_example(self):
        np.testing.assert_allclose(haar_block_mean([1, 2, 3, 4], 0), [1.5, 1.5, 3.5, 3.5])

    @pytest.mark.parametrize("j0", [0, 2, 5])
    def test_truncated_reconstruction(self, j0):
        rng = np.random.default_rng(7 + j0)
        for _ in range(100):
            x = rng.standard_normal(128)
            pyr = forward_dwt(x, "haar", 0)
            for j in range(j0 + 1, pyr.h):
                pyr.level(j)[:] = 0.0
            np.testing.assert_allclose(haar_block_mean(x, j0), inverse_dwt(pyr, "haar"), atol=1e-12)
