"""Besov sequence norms, ball projections and adversarial signals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .noise import SeedSpec
from .wavelet import CoeffPyramid, dyadic_depth

__all__ = [
    "BesovSpec",
    "besov_norm",
    "scale_to_ball",
    "tail_energy",
    "tail_energy_bound",
    "critical_level",
    "adversary_signals",
]


@dataclass(frozen=True)
class BesovSpec:
    m: float
    p: float = 2.0
    q: float = 2.0
    A: float = 1.0
    j0: int = 0

    def __post_init__(self):
        if self.p < 1 or self.q < 1:
            raise ValueError("quasi-norms (p < 1 or q < 1) are not supported")
        if not self.m > 1.0 / self.p:
            raise ValueError(f"need m > 1/p, got m={self.m}, p={self.p}")
        if self.A < 0:
            raise ValueError("radius A must be nonnegative")
        if self.j0 < 0:
            raise ValueError("j0 must be nonnegative")

    @property
    def s(self) -> float:
        return self.m + 0.5 - 1.0 / self.p

    @property
    def energy_exponent(self) -> float:
        """Per-level decay exponent of the l2 energy: ``2m`` for p >= 2, else ``2s``."""
        return 2 * self.m if self.p >= 2 else 2 * self.s


def _lp(x: np.ndarray, p: float) -> float:
    a = np.abs(x)
    if math.isinf(p):
        return float(a.max(initial=0.0))
    return float(np.sum(a**p) ** (1.0 / p))


def besov_norm(pyramid: CoeffPyramid, spec: BesovSpec) -> float:
    """Sequence-space Besov norm of a coefficient pyramid.

    Levels are indexed by their true level ``j`` (not their offset from the
    pyramid's coarsest level), so the weight on level ``j`` is ``2**(j*s)``.
    """
    if pyramid.j0 < spec.j0:
        raise ValueError(f"pyramid starts at level {pyramid.j0} below the ball's j0={spec.j0}")
    coarse = _lp(pyramid.scaling, spec.p)
    per_level = np.array(
        [2.0 ** (j * spec.s) * _lp(d, spec.p) for j, d in zip(pyramid.levels, pyramid.details)]
    )
    return coarse + _lp(per_level, spec.q)


def scale_to_ball(pyramid: CoeffPyramid, spec: BesovSpec, *, to_boundary: bool = False) -> CoeffPyramid:
    """Shrink ``pyramid`` radially into the ball of radius ``A``.

    Already-inside pyramids are returned unchanged unless ``to_boundary`` is
    set, in which case the result has norm exactly ``A``.
    """
    norm = besov_norm(pyramid, spec)
    if norm == 0.0:
        if to_boundary and spec.A > 0:
            raise ValueError("cannot scale the zero pyramid onto the ball boundary")
        return pyramid.copy()
    factor = spec.A / norm if to_boundary else spec.A / max(spec.A, norm)
    return pyramid.scaled(factor)


def tail_energy(pyramid: CoeffPyramid, l: int) -> float:
    """``sum_{j >= l} ||theta_j||_2**2``."""
    return float(sum(np.sum(d**2) for j, d in zip(pyramid.levels, pyramid.details) if j >= l))


def tail_energy_bound(spec: BesovSpec, l: int) -> float:
    """Upper bound on the energy of levels ``>= l`` for any pyramid in the ball."""
    if l < spec.j0:
        raise ValueError("l must be >= j0")
    r = 2.0 ** (-spec.energy_exponent)
    return spec.A**2 * r**l / (1.0 - r)


def critical_level(spec: BesovSpec, n: int, C: float) -> int:
    """Smallest ``j`` with ``C sqrt(j) / sqrt(n) >= 2 A sqrt(2**(-j(2m+1)))``."""
    h = dyadic_depth(n)
    for j in range(max(spec.j0, 1), 64):
        if C * math.sqrt(j / n) >= 2 * spec.A * math.sqrt(2.0 ** (-j * (2 * spec.m + 1))):
            return j
    return h - 1  # only reached for A so large the level never exists


def _level_constant(spec: BesovSpec, h: int, j: int, value: float) -> CoeffPyramid:
    pyr = CoeffPyramid(spec.j0, np.zeros(2**spec.j0), [np.zeros(2**i) for i in range(spec.j0, h)])
    pyr.level(j)[:] = value
    return pyr


def adversary_signals(
    spec: BesovSpec,
    n: int,
    C: float = 1.0,
    *,
    n_random: int = 4,
    seed: int = 0,
) -> list[tuple[str, CoeffPyramid]]:
    """Named in-ball pyramids approximating the worst case over the ball.

    The family holds: the level-constant signal at :func:`critical_level`;
    a level-constant signal on the ball boundary at every level; a single
    boundary spike ``theta_{j,0}`` per level; ``n_random`` random-sign
    signals scaled onto the boundary.
    """
    h = dyadic_depth(n)
    if not spec.j0 <= h - 1:
        raise ValueError(f"n={n} has no detail level at or above j0={spec.j0}")
    out: list[tuple[str, CoeffPyramid]] = []
    A, m = spec.A, spec.m

    jc = min(max(critical_level(spec, n, C), spec.j0), h - 1)
    out.append((f"critical_j{jc}", _level_constant(spec, h, jc, A * math.sqrt(2.0 ** (-jc * (2 * m + 1))))))

    for j in range(spec.j0, h):
        # ||level||_p = 2**(j/p) * c, weighted by 2**(js): boundary when c = A 2**(-j(m+1/2))
        c = A * 2.0 ** (-j * (m + 0.5))
        out.append((f"level_j{j}", _level_constant(spec, h, j, c)))
    for j in range(spec.j0, h):
        pyr = _level_constant(spec, h, j, 0.0)
        pyr.level(j)[0] = A * 2.0 ** (-j * spec.s)
        out.append((f"spike_j{j}", pyr))

    rng = SeedSpec(seed, stream=0x5EED).generator()
    for r in range(n_random):
        # geometric level profile plus random signs, projected onto the boundary
        details = [
            rng.choice([-1.0, 1.0], size=2**j) * rng.random(2**j) * 2.0 ** (-j * (m + 0.5))
            for j in range(spec.j0, h)
        ]
        pyr = CoeffPyramid(spec.j0, np.zeros(2**spec.j0), details)
        out.append((f"random_{r}", scale_to_ball(pyr, spec, to_boundary=True) if A > 0 else pyr.scaled(0.0)))

    # guard against rounding pushing a boundary signal outside
    return [(name, _clip(pyr, spec)) for name, pyr in out]


def _clip(pyr: CoeffPyramid, spec: BesovSpec) -> CoeffPyramid:
    norm = besov_norm(pyr, spec)
    if norm <= spec.A:
        return pyr
    factor = spec.A / norm
    out = pyr.scaled(factor)
    # the rescaled norm can still round a few ulps high
    while besov_norm(out, spec) > spec.A:
        factor = float(np.nextafter(factor, 0.0))
        out = pyr.scaled(factor)
    return out
