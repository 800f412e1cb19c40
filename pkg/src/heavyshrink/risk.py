"""Single-coefficient risk functionals and probability-bound verifiers.

All functionals here work in unit-variance coefficient units: thresholds and
true coefficients are measured in noise standard deviations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import ndtr

from .noise import NoiseSpec, SeedSpec, draw, median_variance, moving_median_full
from .thresholds import soft_threshold

__all__ = [
    "gaussian_soft_risk",
    "mc_soft_risk",
    "BoundCheck",
    "tail_bound_check",
    "kolmogorov_bound",
    "truncated_moment_bound",
    "d_dependent_bound",
    "SandwichResult",
    "fourth_moment_sandwich",
    "max_estimator",
    "deviation_ratio_probe",
]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _phi(x):
    return _INV_SQRT_2PI * np.exp(-0.5 * np.square(x))


def _upper_sq(a, c):
    """``int_a^inf (z - c)**2 phi(z) dz``."""
    return (1.0 + c * c) * ndtr(-a) + (a - 2.0 * c) * _phi(a)


def gaussian_soft_risk(lam, theta):
    """``E (T_lam(theta + Z) - theta)**2`` for ``Z ~ N(0, 1)``, in closed form."""
    lam = np.asarray(lam, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(lam < 0):
        raise ValueError("threshold must be nonnegative")
    t = np.abs(theta)  # risk is even in theta
    inf = np.isinf(lam)
    fl = np.where(inf, 0.0, lam)  # the infinite case is patched in below
    dead = ndtr(fl - t) - ndtr(-fl - t)
    out = t * t * dead + _upper_sq(fl - t, fl) + _upper_sq(fl + t, fl)
    out = np.where(inf, t * t, out)
    return out[()] if out.ndim == 0 else out


def _require_variance(noise: NoiseSpec, allow_infinite: bool) -> None:
    if noise.variance is None and not allow_infinite:
        raise ValueError(
            f"{noise} has no finite variance; its risk may be infinite "
            "(median-prefilter it, or pass allow_infinite=True)"
        )


def mc_soft_risk(
    noise: NoiseSpec,
    lam: float,
    theta: float,
    reps: int,
    seed,
    *,
    allow_infinite: bool = False,
) -> tuple[float, float]:
    """Monte Carlo ``E (T_lam(theta + e) - theta)**2`` and its standard error."""
    if reps < 100:
        raise ValueError("reps must be >= 100")
    _require_variance(noise, allow_infinite)
    rng = seed.generator() if isinstance(seed, SeedSpec) else SeedSpec(int(seed)).generator()
    loss = (soft_threshold(theta + draw(noise, reps, rng), lam) - theta) ** 2
    return float(loss.mean()), float(loss.std(ddof=1) / math.sqrt(reps))


# ---------------------------------------------------------------------------
# probability bounds


@dataclass(frozen=True)
class BoundCheck:
    kind: str
    empirical: float
    se: float
    bound: float
    slack: float = 3.0

    @property
    def passed(self) -> bool:
        return self.empirical <= self.bound + self.slack * self.se

    def __iter__(self):
        return iter((self.empirical, self.bound, self.passed))


def kolmogorov_bound(x: float, s_n: float, K: float) -> float:
    """Kolmogorov's exponential bound on ``P(S_n >= s_n x)`` for bounded summands."""
    if x <= 0:
        return 1.0
    if x <= s_n / K:
        return min(1.0, math.exp(-0.5 * x * x * (1.0 - x * K / (2.0 * s_n))))
    return min(1.0, math.exp(-x * s_n / (4.0 * K)))


def truncated_moment_bound(a: float, a_n: float, K_n: float, *, with_remainder: bool = True) -> float:
    """Bound on ``int_a^inf x**2 dF_n`` for normalized sums with summands ``<= K_n``.

    ``with_remainder`` adds the explicit ``8 e^{-1/(4K^2)} + 32 K^2 e^{-1/(4K^2)}``
    terms that the little-o remainder stands for.
    """
    k_n = 1.0 - a_n * K_n / 2.0
    if not k_n > 0:
        raise ValueError("need a_n * K_n < 2")
    if not 0 < a < a_n:
        raise ValueError("need 0 < a < a_n")
    out = (a * a + 2.0) / k_n * math.exp(-k_n * a * a / 2.0)
    if with_remainder:
        tail = math.exp(-1.0 / (4.0 * K_n * K_n))
        out += 8.0 * tail + 32.0 * K_n * K_n * tail
    return out


def d_dependent_bound(x: float, D: int, sigma_max: float, K: float) -> float:
    """Tail bound for a sum of ``D``-dependent variables bounded by ``K``."""
    if x <= 0:
        return float(D)
    if x <= sigma_max**2 * D / K:
        return D * math.exp(-x * x / (4.0 * D * D * sigma_max**2))
    return D * math.exp(-x / (4.0 * K * D))


def _bernoulli_sum(n: int, reps: int, rng) -> np.ndarray:
    # sum of n symmetric +-1 signs
    return 2.0 * rng.binomial(n, 0.5, size=reps) - n


def _weighted_sums(base: NoiseSpec, weights: np.ndarray, reps: int, rng, chunk_elems=4_000_000):
    n = weights.size
    chunk = max(1, chunk_elems // n)
    if base.family == "bernoulli_sym" and np.all(weights == weights[0]):
        return weights[0] * base.scale * _bernoulli_sum(n, reps, rng)
    parts = []
    for start in range(0, reps, chunk):
        size = min(chunk, reps - start)
        parts.append(draw(base, (size, n), rng) @ weights)
    return np.concatenate(parts)


def _indicator_stats(hits: np.ndarray) -> tuple[float, float]:
    p = float(hits.mean())
    return p, math.sqrt(max(p * (1 - p), 0.0) / hits.size)


def _kolmogorov(params: dict, reps: int, rng) -> BoundCheck:
    base = params.get("base", NoiseSpec("bernoulli_sym"))
    if math.isinf(base.bound):
        raise ValueError("Kolmogorov's inequality needs bounded summands")
    n = int(params.get("n", 400))
    weights = np.asarray(params.get("weights", np.ones(n)), dtype=float)
    x = float(params.get("x", 2.0))
    s_n = math.sqrt(float(np.sum(weights**2)) * base.variance)
    K = float(np.abs(weights).max()) * base.bound
    S = _weighted_sums(base, weights, reps, rng)
    p, se = _indicator_stats(S >= s_n * x)
    return BoundCheck("kolmogorov", p, se, kolmogorov_bound(x, s_n, K))


def _truncated_moment(params: dict, reps: int, rng) -> BoundCheck:
    n = int(params.get("n", 400))
    K_n = 1.0 / math.sqrt(n)  # row of n signs / sqrt(n): sum of variances is 1
    a_n = float(params.get("a_n", 0.2 / K_n))
    a = float(params.get("a", 0.5 * a_n))
    S = _bernoulli_sum(n, reps, rng) * K_n
    vals = np.where(S > a, S * S, 0.0)
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(reps))
    return BoundCheck("truncated_moment", est, se, truncated_moment_bound(a, a_n, K_n))


def _d_dependent(params: dict, reps: int, rng) -> BoundCheck:
    base = params.get("base", NoiseSpec("bernoulli_sym"))
    if math.isinf(base.bound):
        raise ValueError("the D-dependent bound needs bounded summands")
    D = int(params.get("D", 3))
    if D < 1 or D % 2 == 0:
        raise ValueError("D must be odd")
    n = int(params.get("n", 400))
    var = median_variance(base, D)
    K = base.bound
    # residue class j (0-based) holds ceil((n - j) / D) independent terms
    sigma_max = math.sqrt(max(-(-(n - j) // D) for j in range(D)) * var)
    x = float(params.get("x", 2.5 * D * sigma_max))
    chunk = max(1, 4_000_000 // (n + D))
    hits = []
    for start in range(0, reps, chunk):
        size = min(chunk, reps - start)
        X = moving_median_full(draw(base, (size, n + D - 1), rng), D)
        hits.append(X.sum(axis=1) >= x)
    p, se = _indicator_stats(np.concatenate(hits))
    return BoundCheck("d_dependent", p, se, d_dependent_bound(x, D, sigma_max, K))


_CHECKS = {
    "kolmogorov": _kolmogorov,
    "truncated_moment": _truncated_moment,
    "d_dependent": _d_dependent,
}


def tail_bound_check(kind: str, params: dict | None = None, reps: int = 1_000_000, seed=0) -> BoundCheck:
    """Compare a Monte Carlo tail quantity with its analytic bound.

    ``kind`` is one of ``kolmogorov`` (``P(S_n >= s_n x)``), ``truncated_moment``
    (``E S**2 1{S > a}``) or ``d_dependent`` (``P(sum X_i >= x)`` for moving
    medians of width ``D``). Passing means empirical <= bound + 3 SE.
    """
    try:
        check = _CHECKS[kind]
    except KeyError:
        raise ValueError(f"unknown check {kind!r}; expected one of {sorted(_CHECKS)}") from None
    rng = seed.generator() if isinstance(seed, SeedSpec) else SeedSpec(int(seed)).generator()
    return check(dict(params or {}), int(reps), rng)


@dataclass(frozen=True)
class SandwichResult:
    estimate: float
    se: float
    lower: float
    upper: float
    slack: float = 4.0

    @property
    def passed(self) -> bool:
        return self.lower - self.slack * self.se <= self.estimate <= self.upper + self.slack * self.se

    def __iter__(self):
        return iter((self.estimate, self.lower, self.upper, self.passed))


def fourth_moment_sandwich(weights, base: NoiseSpec, reps: int = 1_000_000, seed=0) -> SandwichResult:
    """Monte Carlo ``E (sum a_i X_i)**4`` against ``[min(3, m4), max(3, m4)]``."""
    a = np.asarray(weights, dtype=float)
    if abs(float(np.sum(a * a)) - 1.0) > 1e-9:
        raise ValueError("weights must have unit Euclidean norm")
    m4 = base.m4
    if math.isinf(m4):
        raise ValueError(f"{base} has no finite fourth moment")
    rng = seed.generator() if isinstance(seed, SeedSpec) else SeedSpec(int(seed)).generator()
    Y = _weighted_sums(base, a, reps, rng) / math.sqrt(base.variance)
    Y4 = Y**4
    return SandwichResult(
        float(Y4.mean()), float(Y4.std(ddof=1) / math.sqrt(reps)), min(3.0, m4), max(3.0, m4)
    )


# ---------------------------------------------------------------------------
# max-based estimator


def max_estimator(X, M: int, c_M: float) -> np.ndarray:
    """Sliding-window maximum minus a centring constant.

    ``f_hat[i] = max(X[i:i+M]) - c_M`` for ``i <= n - M``; later indices
    repeat ``f_hat[n - M]``. ``c_M`` must already be in the data's units.
    Works along the last axis.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[-1]
    if int(M) != M or M < 1:
        raise ValueError("M must be a positive integer")
    if M > n:
        raise ValueError(f"window M={M} exceeds signal length {n}")
    head = sliding_window_view(X, M, axis=-1).max(axis=-1) - c_M
    tail = np.repeat(head[..., -1:], M - 1, axis=-1)
    return np.concatenate([head, tail], axis=-1)


# ---------------------------------------------------------------------------
# moderate deviations


def deviation_ratio_probe(weights, base: NoiseSpec, x_grid, reps: int = 1_000_000, seed=0) -> list[dict]:
    """Ratios of empirical tails of ``sum a_i X_i`` to Gaussian tails.

    For each ``x`` reports ``P(S <= x) / Phi(x)`` and ``P(S > x) / (1 - Phi(x))``
    with standard errors. ``|x|`` must not exceed ``sqrt(2 log(1/M3))``,
    ``M3 = sum |a_i|**3 E|X|**3`` being the Lyapunov ratio.
    """
    a = np.asarray(weights, dtype=float)
    if abs(float(np.sum(a * a)) - 1.0) > 1e-9:
        raise ValueError("weights must have unit Euclidean norm")
    if base.variance is None:
        raise ValueError(f"{base} has no finite variance")
    sd = math.sqrt(base.variance)
    M3 = float(np.sum(np.abs(a) ** 3)) * base.abs_moment(3) / sd**3
    window = math.sqrt(2.0 * math.log(1.0 / M3)) if M3 < 1 else 0.0
    xs = np.asarray(x_grid, dtype=float)
    if np.any(np.abs(xs) > window):
        raise ValueError(f"x outside the moderate-deviation window |x| <= {window:.4g}")
    rng = seed.generator() if isinstance(seed, SeedSpec) else SeedSpec(int(seed)).generator()
    S = _weighted_sums(base, a, reps, rng) / sd
    rows = []
    for x in xs:
        lo, lo_se = _indicator_stats(S <= x)
        hi, hi_se = _indicator_stats(S > x)
        g_lo, g_hi = float(ndtr(x)), float(ndtr(-x))
        rows.append(
            dict(
                x=float(x),
                lower_ratio=lo / g_lo,
                lower_se=lo_se / g_lo,
                upper_ratio=hi / g_hi,
                upper_se=hi_se / g_hi,
            )
        )
    return rows
