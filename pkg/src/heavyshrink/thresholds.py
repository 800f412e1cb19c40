"""Soft thresholding, threshold selection and vertical block thresholding."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .wavelet import CoeffPyramid, _atomic_write, as_signal, dyadic_depth

__all__ = [
    "soft_threshold",
    "ThresholdPlan",
    "BlockConfig",
    "RetentionMask",
    "apply_plan",
    "universal_threshold",
    "noise_exceedance",
    "level_thresholds",
    "above",
    "vertical_block_estimate",
    "vertical_keep",
    "haar_block_mean",
]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def soft_threshold(x, lam):
    """``(|x| - lam)_+ * sign(x)``; scalar in, scalar out."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0) or np.any(np.isnan(lam)):
        raise ValueError("threshold must be nonnegative")
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore"):
        out = np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)
    # |x| - inf is -inf for finite x, so an infinite threshold gives exact zeros
    out = np.where(np.isinf(lam) & np.isfinite(x), 0.0, out)
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class ThresholdPlan:
    """Level-constant thresholds ``lam[j - j0]`` for levels ``j0..h-1``.

    Levels strictly above ``discard_above`` are zeroed regardless of ``lam``.
    """

    j0: int
    thresholds: tuple[float, ...]
    discard_above: int | None = None

    def __post_init__(self):
        lam = tuple(float(t) for t in self.thresholds)
        if any(t < 0 or math.isnan(t) for t in lam):
            raise ValueError("thresholds must be nonnegative")
        object.__setattr__(self, "thresholds", lam)
        if self.discard_above is not None and not self.j0 <= self.discard_above <= self.h - 1:
            raise ValueError("discard_above must lie within the plan's levels")

    @property
    def h(self) -> int:
        return self.j0 + len(self.thresholds)

    def threshold(self, j: int) -> float:
        if self.discard_above is not None and j > self.discard_above:
            return math.inf
        return self.thresholds[j - self.j0]

    def effective(self) -> np.ndarray:
        return np.array([self.threshold(j) for j in range(self.j0, self.h)])

    @classmethod
    def uniform(cls, j0: int, h: int, lam: float, discard_above: int | None = None):
        return cls(j0, (lam,) * (h - j0), discard_above)

    def scaled(self, factor: float) -> "ThresholdPlan":
        return ThresholdPlan(self.j0, tuple(t * factor for t in self.thresholds), self.discard_above)


@dataclass(frozen=True)
class BlockConfig:
    J: int
    lam: float
    neighbors: int = 0  # the "keep (j, k'), |k - k'| <= neighbors" variation; 0 = off

    def __post_init__(self):
        if self.J < 0 or self.neighbors < 0:
            raise ValueError("J and neighbors must be nonnegative")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")


@dataclass
class RetentionMask:
    j0: int
    kept: list[np.ndarray]

    @property
    def h(self) -> int:
        return self.j0 + len(self.kept)

    def level(self, j: int) -> np.ndarray:
        return self.kept[j - self.j0]

    def count(self) -> int:
        return int(sum(k.sum() for k in self.kept))

    def rows(self):
        for j, lev in zip(range(self.j0, self.h), self.kept):
            for k, flag in enumerate(lev):
                yield j, k, int(flag)

    def to_csv(self, path) -> None:
        def _write(fh):
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["level", "index", "kept"])
            w.writerows(self.rows())

        _atomic_write(Path(path), _write)


def _plan_for(pyramid: CoeffPyramid, plan: ThresholdPlan) -> np.ndarray:
    if plan.j0 != pyramid.j0 or plan.h != pyramid.h:
        raise ValueError(
            f"plan covers levels [{plan.j0}, {plan.h - 1}] but pyramid has "
            f"[{pyramid.j0}, {pyramid.h - 1}]"
        )
    return plan.effective()


def apply_plan(pyramid: CoeffPyramid, plan: ThresholdPlan) -> CoeffPyramid:
    """Soft-threshold every detail level with its plan threshold; keep scaling."""
    lam = _plan_for(pyramid, plan)
    details = [soft_threshold(d, t) for d, t in zip(pyramid.details, lam)]
    return CoeffPyramid(pyramid.j0, pyramid.scaling.copy(), details)


def noise_exceedance(t: float) -> float:
    """``E[1{|Z| > t} (1 + Z**2)]`` for standard normal ``Z``, in closed form."""
    return 4.0 * ndtr(-t) + 2.0 * t * _INV_SQRT_2PI * math.exp(-0.5 * t * t)


def universal_threshold(n: int, *, xtol: float = 1e-12) -> float:
    """Block threshold ``lam_n`` in unit-variance coefficient units.

    ``lam_n - 1`` solves ``E[1{|Z| > t}(1 + Z**2)] = 1/n``; callers working
    in model units multiply by ``sigma / sqrt(n)``.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    target = 1.0 / n
    # noise_exceedance(0) = 2 > 1/n and it decreases to 0
    hi = 1.0
    while noise_exceedance(hi) > target:
        hi *= 2.0
    t = brentq(lambda s: noise_exceedance(s) - target, 0.0, hi, xtol=xtol, rtol=4 * np.finfo(float).eps)
    return t + 1.0


def level_thresholds(
    n: int, j0: int, C: float, sigma: float, *, coarsest: int | None = None
) -> ThresholdPlan:
    """Plan with ``lam_j = C * sigma * sqrt((j - j0)_+) / sqrt(n)``.

    The plan covers pyramid levels ``coarsest..log2(n) - 1`` (default
    ``coarsest = j0``).
    """
    if C <= 0 or sigma <= 0:
        raise ValueError("C and sigma must be positive")
    h = dyadic_depth(n)
    start = j0 if coarsest is None else coarsest
    if not 0 <= start <= h - 1:
        raise ValueError(f"coarsest level must lie in [0, {h - 1}]")
    lam = tuple(C * sigma * math.sqrt(max(j - j0, 0)) / math.sqrt(n) for j in range(start, h))
    return ThresholdPlan(start, lam)


def above(jp: int, kp: int, j: int, k: int, J: int, *, one_based: bool = False) -> bool:
    """Whether coefficient ``(jp, kp)`` lies above ``(j, k)`` within ``J``.

    With zero-based indices the ancestor of ``k`` at level ``jp`` is
    ``floor(k / 2**(j - jp))``; ``one_based=True`` uses the ceiling form
    ``ceil(k / 2**(j - jp))`` appropriate for indices starting at 1.
    """
    if jp > j:
        return False
    shift = j - jp
    anc = -((-k) >> shift) if one_based else k >> shift
    return abs(anc - kp) <= J


def vertical_keep(abs_details: list[np.ndarray], lam: float, J: int, neighbors: int = 0) -> list[np.ndarray]:
    """Boolean keep-masks for vertical block thresholding.

    ``abs_details[i]`` holds ``|Y|`` for level ``j0 + i`` (a leading batch
    axis is allowed). A coefficient is kept iff it lies above, within ``J``,
    some coefficient with ``|Y| >= lam``.
    """
    big = [a >= lam for a in abs_details]
    if neighbors:
        big = [_dilate(b, neighbors) for b in big]
    # reach[i][a]: some large coefficient at level >= j0+i has ancestor a at level j0+i
    reach = [None] * len(big)
    below = None
    for i in range(len(big) - 1, -1, -1):
        r = big[i].copy()
        if below is not None:
            r |= below[..., 0::2] | below[..., 1::2]
        reach[i] = below = r
    return [_dilate(r, J) if J else r for r in reach]


def _dilate(b: np.ndarray, J: int) -> np.ndarray:
    out = b.copy()
    width = b.shape[-1]
    for s in range(1, min(J, width - 1) + 1):
        out[..., s:] |= b[..., :-s]
        out[..., :-s] |= b[..., s:]
    return out


def vertical_block_estimate(
    noisy: CoeffPyramid, cfg: BlockConfig
) -> tuple[CoeffPyramid, RetentionMask]:
    """Keep-or-kill estimate keeping large coefficients and everything above them.

    A detail coefficient survives iff ``|Y| >= lam`` or it lies above (within
    ``cfg.J``) a coefficient with ``|Y| >= lam``. Scaling coefficients pass
    through. Indices are zero-based.
    """
    kept = vertical_keep([np.abs(d) for d in noisy.details], cfg.lam, cfg.J, cfg.neighbors)
    details = [np.where(m, d, 0.0) for m, d in zip(kept, noisy.details)]
    return CoeffPyramid(noisy.j0, noisy.scaling.copy(), details), RetentionMask(noisy.j0, kept)


def haar_block_mean(signal, j0: int) -> np.ndarray:
    """Replace each sample by the mean of its dyadic block of width ``2**(h-j0-1)``."""
    x = as_signal(signal)
    h = dyadic_depth(x.size)
    if not 0 <= j0 <= h - 1:
        raise ValueError(f"j0 must lie in [0, {h - 1}]")
    width = 2 ** (h - j0 - 1)
    means = x.reshape(-1, width).mean(axis=1)
    return np.repeat(means, width)
