import math

import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.special import ndtr

from heavyshrink.noise import NoiseSpec, SeedSpec, max_statistics, sample
from heavyshrink.risk import (
    BoundCheck,
    d_dependent_bound,
    deviation_ratio_probe,
    fourth_moment_sandwich,
    gaussian_soft_risk,
    kolmogorov_bound,
    max_estimator,
    mc_soft_risk,
    tail_bound_check,
    truncated_moment_bound,
)

from oracles import quad_soft_risk

# frozen from the quadrature oracle: 2 * int_1^inf (x - 1)**2 phi(x) dx
RISK_1_0 = 0.1506795666875415

LAM_GRID = np.linspace(0.0, 6.0, 50)
THETA_GRID = np.linspace(-5.0, 5.0, 50)


class TestGaussianRisk:
    def test_identity(self):
        assert gaussian_soft_risk(0.0, 0.0) == pytest.approx(1.0, abs=1e-15)
        assert gaussian_soft_risk(0.0, 3.7) == pytest.approx(1.0, abs=1e-14)

    def test_frozen(self):
        assert quad_soft_risk(1.0, 0.0) == pytest.approx(RISK_1_0, abs=1e-12)
        assert gaussian_soft_risk(1.0, 0.0) == pytest.approx(RISK_1_0, abs=1e-12)

    def test_half_theta_squared(self):
        assert gaussian_soft_risk(2.0, 1.0) >= 0.5

    def test_infinite_threshold(self):
        np.testing.assert_allclose(gaussian_soft_risk(np.inf, np.array([0.0, 2.0, -3.0])), [0.0, 4.0, 9.0])

    def test_vectorized_even(self):
        L, T = np.meshgrid(LAM_GRID, THETA_GRID)
        np.testing.assert_array_equal(gaussian_soft_risk(L, T), gaussian_soft_risk(L, -T))

    def test_quadrature_grid(self):
        worst = 0.0
        for lam in LAM_GRID:
            for theta in THETA_GRID:
                worst = max(worst, abs(gaussian_soft_risk(lam, theta) - quad_soft_risk(lam, theta)))
        assert worst <= 1e-8

    def test_negative_threshold(self):
        with pytest.raises(ValueError):
            gaussian_soft_risk(-1.0, 0.0)


class TestRiskInequalities:
    def test_half_theta_squared_grid(self):
        g = np.linspace(0, 5, 201)
        L, T = np.meshgrid(g, g)
        mask = L >= T
        assert np.all(gaussian_soft_risk(L[mask], T[mask]) >= T[mask] ** 2 / 2)

    def test_dead_zone_decomposition(self):
        L, T = np.meshgrid(np.linspace(0, 8, 201), np.linspace(-6, 6, 241))
        a = np.abs(T)
        rhs = T**2 * (ndtr(L - a) - ndtr(-L - a)) + (gaussian_soft_risk(L, 0) + gaussian_soft_risk(L + a, 0)) / 2
        assert np.all(gaussian_soft_risk(L, T) - rhs >= -1e-14)

    def test_zero_risk_lower_bound(self):
        lam = np.linspace(1, 12, 500)
        lower = np.exp(-((lam + 1) ** 2) / 2) / (math.sqrt(2 * math.pi) * (lam + 1))
        assert np.all(gaussian_soft_risk(lam, 0.0) >= lower)

    @pytest.mark.parametrize("n", [16, 256, 4096, 2**16])
    def test_monotone_beyond_calibrated(self, n):
        lam_n = brentq(lambda x: gaussian_soft_risk(x, 0.0) - 1 / n**2, 0, 20, xtol=1e-14)
        th = np.linspace(0, 10, 401)[:, None]
        lam = lam_n + np.linspace(0, 6, 301)[None, :]
        gap = gaussian_soft_risk(lam, th) + 1 / n**2 - gaussian_soft_risk(lam_n, th)
        assert gap.min() >= -1e-15


class TestMonteCarloRisk:
    def test_gaussian_agreement(self):
        rng_seed = 0
        for lam in (0.0, 0.5, 1.5, 3.0):
            for theta in (0.0, 0.7, 2.0, -4.0):
                est, se = mc_soft_risk(NoiseSpec("gaussian"), lam, theta, 400_000, rng_seed)
                rng_seed += 1
                assert abs(est - gaussian_soft_risk(lam, theta)) <= 4 * se

    def test_dead_zone(self):
        est, se = mc_soft_risk(NoiseSpec("bernoulli_sym"), 10.0, 1.3, 1000, 1)
        assert est == pytest.approx(1.3**2, rel=1e-14) and se <= 1e-14

    @pytest.mark.parametrize("fam", ["gaussian", "bernoulli_sym", "uniform_sym"])
    def test_variance(self, fam):
        est, se = mc_soft_risk(NoiseSpec(fam), 0.0, 0.0, 200_000, 2)
        assert abs(est - 1) <= 4 * max(se, 1e-12)

    def test_infinite_variance_guard(self):
        with pytest.raises(ValueError):
            mc_soft_risk(NoiseSpec("cauchy"), 1.0, 0.0, 1000, 0)
        est, _ = mc_soft_risk(NoiseSpec("cauchy"), 1.0, 0.0, 1000, 0, allow_infinite=True)
        assert est > 0

    def test_replicable_and_stream_consistent(self):
        a = mc_soft_risk(NoiseSpec("uniform_sym"), 1.0, 0.5, 50_000, SeedSpec(3, 0))
        assert a == mc_soft_risk(NoiseSpec("uniform_sym"), 1.0, 0.5, 50_000, SeedSpec(3, 0))
        b = mc_soft_risk(NoiseSpec("uniform_sym"), 1.0, 0.5, 50_000, SeedSpec(3, 1))
        assert abs(a[0] - b[0]) <= 4 * math.hypot(a[1], b[1])

    def test_reps_floor(self):
        with pytest.raises(ValueError):
            mc_soft_risk(NoiseSpec("gaussian"), 1.0, 0.0, 10, 0)


class TestBounds:
    def test_degenerate_x(self):
        assert kolmogorov_bound(0.0, 20.0, 1.0) >= 1.0
        assert d_dependent_bound(0.0, 3, 1.0, 1.0) >= 1.0
        chk = tail_bound_check("kolmogorov", {"n": 100, "x": 0.0}, 10_000, 1)
        assert chk.passed and chk.bound >= 1 >= chk.empirical

    def test_kolmogorov_branches(self):
        # small-deviation branch below s_n / K, large-deviation branch above
        assert kolmogorov_bound(1.0, 10.0, 1.0) == pytest.approx(math.exp(-0.5 * 0.95))
        assert kolmogorov_bound(20.0, 10.0, 1.0) == pytest.approx(math.exp(-50.0))

    def test_truncated_moment_validation(self):
        with pytest.raises(ValueError):
            truncated_moment_bound(1.0, 5.0, 0.5)
        with pytest.raises(ValueError):
            truncated_moment_bound(6.0, 5.0, 0.1)

    def test_result_unpacks(self):
        emp, bound, ok = BoundCheck("x", 0.1, 0.01, 0.05)
        assert not ok and emp == 0.1 and bound == 0.05

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            tail_bound_check("chernoff")

    def test_unbounded_base(self):
        with pytest.raises(ValueError):
            tail_bound_check("kolmogorov", {"base": NoiseSpec("gaussian")}, 1000)

    def test_kolmogorov(self):
        assert tail_bound_check("kolmogorov", {"n": 400, "x": 2.0}, 200_000, 2).passed

    def test_kolmogorov_weighted(self):
        w = np.linspace(0.5, 1.5, 300)
        assert tail_bound_check("kolmogorov", {"weights": w, "x": 2.5, "base": NoiseSpec("uniform_sym")}, 100_000, 3).passed

    def test_truncated_moment(self):
        assert tail_bound_check("truncated_moment", {"n": 400}, 200_000, 4).passed

    def test_d_dependent(self):
        chk = tail_bound_check("d_dependent", {"n": 400, "D": 3}, 100_000, 5)
        assert chk.passed
        # default x sits in the small-deviation branch
        assert chk.bound < 3

    def test_d_dependent_uniform(self):
        assert tail_bound_check("d_dependent", {"n": 200, "D": 5, "base": NoiseSpec("uniform_sym")}, 50_000, 6).passed

    def test_replicable(self):
        a = tail_bound_check("d_dependent", {"n": 100}, 20_000, 7)
        assert a == tail_bound_check("d_dependent", {"n": 100}, 20_000, 7)


class TestFourthMoment:
    @pytest.mark.parametrize("fam,m4", [("bernoulli_sym", 1.0), ("uniform_sym", 1.8), ("gaussian", 3.0)])
    def test_single_weight(self, fam, m4):
        res = fourth_moment_sandwich([1.0], NoiseSpec(fam), 400_000, 1)
        if fam == "bernoulli_sym":
            assert res.estimate == 1.0
        assert abs(res.estimate - m4) <= 4 * max(res.se, 1e-15)

    def test_bernoulli_equal_weights(self):
        res = fourth_moment_sandwich(np.full(64, 1 / 8), NoiseSpec("bernoulli_sym"), 400_000, 2)
        assert res.passed
        assert res.estimate == pytest.approx(3 - 2 / 64, abs=4 * res.se)

    def test_gaussian(self):
        rng = np.random.default_rng(3)
        w = rng.standard_normal(20)
        res = fourth_moment_sandwich(w / np.linalg.norm(w), NoiseSpec("gaussian"), 400_000, 3)
        assert res.lower == pytest.approx(3.0) and res.upper == pytest.approx(3.0)
        assert res.passed

    def test_unit_norm_required(self):
        with pytest.raises(ValueError):
            fourth_moment_sandwich([1.0, 1.0], NoiseSpec("gaussian"), 1000)

    def test_needs_fourth_moment(self):
        with pytest.raises(ValueError):
            fourth_moment_sandwich([1.0], NoiseSpec("student_t", nu=3), 1000)


class TestMaxEstimator:
    def test_identity(self):
        x = np.random.default_rng(0).standard_normal(32)
        np.testing.assert_array_equal(max_estimator(x, 1, 0.0), x)

    def test_increasing(self):
        f = np.cumsum(np.random.default_rng(1).uniform(0, 1, 32))
        out = max_estimator(f, 3, 0.0)
        np.testing.assert_array_equal(out[:30], f[2:])
        np.testing.assert_array_equal(out[30:], f[-1])

    def test_validation(self):
        with pytest.raises(ValueError):
            max_estimator(np.ones(4), 5, 0.0)
        with pytest.raises(ValueError):
            max_estimator(np.ones(4), 0, 0.0)

    def test_risk_bound(self):
        n, M = 1024, 20
        t = np.arange(n) / n
        f = 0.5 * np.sin(2 * np.pi * t) / math.sqrt(n)
        noise = NoiseSpec("bernoulli_sym", scale=1 / math.sqrt(n))
        stats = max_statistics(noise, M)
        rng = SeedSpec(11).generator()
        from heavyshrink.noise import draw

        X = f + draw(noise, (400, n), rng)
        loss = ((max_estimator(X, M, stats.mean) - f) ** 2).sum(axis=1)
        bound = 4 * M**2 * np.sum(np.diff(f) ** 2) + 4 * n * stats.var
        assert loss.mean() <= bound + 4 * loss.std(ddof=1) / math.sqrt(loss.size)


class TestDeviationProbe:
    def test_gaussian(self):
        w = np.full(256, 1 / 16)
        for row in deviation_ratio_probe(w, NoiseSpec("gaussian"), [-1.0, 0.0, 1.0, 2.0], 400_000, 1):
            assert abs(row["lower_ratio"] - 1) <= 4 * row["lower_se"]
            assert abs(row["upper_ratio"] - 1) <= 4 * row["upper_se"]

    def test_zero_symmetric(self):
        (row,) = deviation_ratio_probe(np.full(64, 1 / 8), NoiseSpec("uniform_sym"), [0.0], 400_000, 2)
        assert abs(row["lower_ratio"] - 1) <= 4 * row["lower_se"]

    def test_uniform_256(self):
        (row,) = deviation_ratio_probe(np.full(256, 1 / 16), NoiseSpec("uniform_sym"), [2.0], 400_000, 3)
        assert 0.8 <= row["upper_ratio"] <= 1.25
        assert 0.8 <= row["lower_ratio"] <= 1.25

    def test_window(self):
        with pytest.raises(ValueError):
            deviation_ratio_probe(np.full(4, 0.5), NoiseSpec("uniform_sym"), [3.0], 1000)
