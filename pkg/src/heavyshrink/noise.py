"""Noise families, reproducible random streams and moment bookkeeping.

Every family with a finite variance is standardized to unit variance before
``scale`` is applied, so ``NoiseSpec("uniform_sym")`` is uniform on
``[-sqrt(3), sqrt(3)]``. Random streams come from counter-based Philox
generators keyed by ``(seed, stream)``.
"""

from __future__ import annotations

import functools
import math
import re
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import special

__all__ = [
    "FAMILIES",
    "NoiseSpec",
    "SeedSpec",
    "MaxStats",
    "parse_noise",
    "sample",
    "moment_condition",
    "max_statistics",
    "d_dependent_sample",
]

FAMILIES = ("gaussian", "bernoulli_sym", "uniform_sym", "student_t", "cauchy")
_SQ3 = math.sqrt(3.0)


@dataclass(frozen=True)
class NoiseSpec:
    family: str = "gaussian"
    scale: float = 1.0
    nu: float | None = None  # degrees of freedom, student_t only

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}; expected one of {FAMILIES}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if self.family == "student_t":
            if self.nu is None or not self.nu > 0:
                raise ValueError("student_t needs positive degrees of freedom nu")
        elif self.nu is not None:
            raise ValueError(f"{self.family} takes no nu parameter")

    def __str__(self):
        base = f"student_t({self.nu:g})" if self.family == "student_t" else self.family
        return base if self.scale == 1.0 else f"{base}*{self.scale:g}"

    @property
    def gamma(self) -> float:
        """Tail order: ``P(|X| >= x) = O(x**-gamma)``."""
        if self.family == "cauchy":
            return 1.0
        if self.family == "student_t":
            return float(self.nu)
        return math.inf

    @property
    def symmetric(self) -> bool:
        return True

    @property
    def standardized(self) -> bool:
        return self.family != "cauchy" and not (self.family == "student_t" and self.nu <= 2)

    @property
    def variance(self) -> float | None:
        return self.scale**2 if self.standardized else None

    @property
    def bound(self) -> float:
        """Sup of ``|X|`` (``inf`` for unbounded families)."""
        if self.family == "bernoulli_sym":
            return self.scale
        if self.family == "uniform_sym":
            return _SQ3 * self.scale
        return math.inf

    def abs_moment(self, r: float) -> float:
        """``E|X|**r`` (``inf`` when it does not exist)."""
        s = self.scale**r
        if self.family == "gaussian":
            return s * 2 ** (r / 2) * special.gamma((r + 1) / 2) / math.sqrt(math.pi)
        if self.family == "bernoulli_sym":
            return s
        if self.family == "uniform_sym":
            return s * _SQ3**r / (r + 1)
        if self.family == "cauchy":
            return math.inf if r >= 1 else s / math.cos(math.pi * r / 2)
        nu = self.nu
        if r >= nu:
            return math.inf
        raw = (
            nu ** (r / 2)
            * special.gamma((r + 1) / 2)
            * special.gamma((nu - r) / 2)
            / (math.sqrt(math.pi) * special.gamma(nu / 2))
        )
        if nu > 2:
            raw *= ((nu - 2) / nu) ** (r / 2)
        return s * raw

    @property
    def m4(self) -> float:
        """Standardized fourth moment ``E X**4 / (E X**2)**2``."""
        var = self.variance
        if var is None:
            return math.inf
        return self.abs_moment(4) / var**2


def parse_noise(text: str, scale: float = 1.0) -> NoiseSpec:
    """Parse ``"cauchy"``, ``"student_t(3)"``, optionally with ``"*0.5"`` scale."""
    m = re.fullmatch(
        r"\s*([a-z_]+)\s*(?:\(\s*([0-9.eE+-]+)\s*\))?\s*(?:\*\s*([0-9.eE+-]+))?\s*", text
    )
    if not m:
        raise ValueError(f"cannot parse noise spec {text!r}")
    family, arg, mult = m.groups()
    nu = float(arg) if arg is not None else None
    if mult is not None:
        scale = scale * float(mult)
    return NoiseSpec(family, scale=scale, nu=nu)


@dataclass(frozen=True)
class SeedSpec:
    seed: int
    stream: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.stream < 0:
            raise ValueError("stream id must be nonnegative")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, *keys: int) -> "SeedSpec":
        """Derive a distinct stream, deterministically, from this one."""
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream, *keys))
        return SeedSpec(self.seed, int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1)))


def _as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, SeedSpec):
        return seed.generator()
    return SeedSpec(int(seed)).generator()


def draw(spec: NoiseSpec, size, rng: np.random.Generator) -> np.ndarray:
    """Draw an array of the given shape from ``spec`` using ``rng``."""
    fam = spec.family
    if fam == "gaussian":
        x = rng.standard_normal(size)
    elif fam == "bernoulli_sym":
        x = 2.0 * rng.integers(0, 2, size=size) - 1.0
    elif fam == "uniform_sym":
        x = rng.uniform(-_SQ3, _SQ3, size=size)
    elif fam == "cauchy":
        x = rng.standard_cauchy(size)
    else:
        x = rng.standard_t(spec.nu, size=size)
        if spec.nu > 2:
            x *= math.sqrt((spec.nu - 2) / spec.nu)
    if spec.scale != 1.0:
        x *= spec.scale
    return x


def sample(spec: NoiseSpec, n: int, seed) -> np.ndarray:
    """``n`` i.i.d. draws; identical for identical ``(seed, stream)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return draw(spec, n, _as_generator(seed))


def moment_condition(m: float, p: float) -> float:
    """Moment order the noise must exceed for Gaussian-equivalent soft thresholding."""
    if p < 1:
        raise ValueError("p must be >= 1")
    if m <= 1.0 / p:
        raise ValueError(f"need m > 1/p, got m={m}, p={p}")
    if p >= 2:
        return 3.0 * (2 * m + 1) / m
    s = m + 0.5 - 1.0 / p
    return 6.0 * s * (2 * m + 1) / (s * (2 * m + 1) - m)


@dataclass(frozen=True)
class MaxStats:
    """Mean and variance of the max of ``M`` i.i.d. draws."""

    mean: float
    var: float
    mean_se: float = 0.0
    var_se: float = 0.0
    exact: bool = True


def max_statistics(spec: NoiseSpec, M: int, *, reps: int = 200_000, seed: int = 0) -> MaxStats:
    """``E max_{i<=M} e_i`` and ``var max_{i<=M} e_i``.

    Closed forms for ``bernoulli_sym`` and ``uniform_sym``; Monte Carlo with
    standard errors for ``gaussian`` and ``student_t`` with ``nu > 2``.
    """
    if int(M) != M or M < 1:
        raise ValueError("M must be a positive integer")
    s = spec.scale
    if spec.family == "bernoulli_sym":
        mean = 1.0 - 2.0 ** (1 - M)
        var = 2.0 ** (2 - M) - 2.0 ** (2 - 2 * M)
        return MaxStats(s * mean, s * s * var)
    if spec.family == "uniform_sym":
        a = _SQ3 * s
        return MaxStats(a * (M - 1) / (M + 1), a * a * 4 * M / ((M + 1) ** 2 * (M + 2)))
    if not spec.standardized:
        raise ValueError(f"the max of {spec} has no finite variance")
    if M == 1:
        return MaxStats(0.0, spec.variance)
    return _mc_max_stats(spec, int(M), int(reps), int(seed))


@functools.lru_cache(maxsize=256)
def _mc_max_stats(spec: NoiseSpec, M: int, reps: int, seed: int) -> MaxStats:
    rng = SeedSpec(seed, stream=M).generator()
    chunk = max(1, 2_000_000 // M)
    maxima = np.concatenate(
        [draw(spec, (min(chunk, reps - i), M), rng).max(axis=1) for i in range(0, reps, chunk)]
    )
    mean = float(maxima.mean())
    dev2 = (maxima - mean) ** 2
    var = float(dev2.sum() / (reps - 1))
    return MaxStats(
        mean,
        var,
        mean_se=math.sqrt(var / reps),
        var_se=float(dev2.std(ddof=1) / math.sqrt(reps)),
        exact=False,
    )


def moving_median_full(x: np.ndarray, D: int) -> np.ndarray:
    """Medians of all full width-``D`` windows along the last axis (length ``n - D + 1``)."""
    half = D // 2
    return np.partition(sliding_window_view(x, D, axis=-1), half, axis=-1)[..., half]


def d_dependent_sample(base: NoiseSpec, D: int, n: int, seed) -> np.ndarray:
    """Width-``D`` moving medians of an i.i.d. stream: ``n`` exactly D-dependent values.

    The base families are symmetric, so the medians are already centred.
    """
    if int(D) != D or D < 1 or D % 2 == 0:
        raise ValueError("D must be a positive odd integer")
    if n < 1:
        raise ValueError("n must be >= 1")
    raw = sample(base, n + D - 1, seed)
    if D == 1:
        return raw
    return moving_median_full(raw, D)


def median_variance(base: NoiseSpec, D: int) -> float:
    """Exact variance of the median of ``D`` i.i.d. draws for bounded families."""
    if base.family == "bernoulli_sym":
        return base.scale**2
    if base.family == "uniform_sym":
        return (_SQ3 * base.scale) ** 2 / (D + 2)
    raise ValueError("exact median variance is only available for bounded families")
