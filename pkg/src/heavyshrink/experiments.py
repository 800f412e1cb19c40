"""Minimax risk experiments: estimator pipelines, adversaries, reports, rate fits.

Pipeline risks are in model units: data ``X = f + e / sqrt(n)`` where the
wavelet coefficients of ``f`` lie in a Besov ball, and the risk is
``E ||theta_hat - theta||_2**2``.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .besov import BesovSpec, adversary_signals
from .noise import NoiseSpec, SeedSpec, draw, moment_condition
from .prefilter import filter_length, median_filter
from .risk import gaussian_soft_risk
from .thresholds import (
    ThresholdPlan,
    level_thresholds,
    soft_threshold,
    universal_threshold,
    vertical_keep,
)
from .wavelet import CoeffPyramid, _atomic_write, check_smoothness, dyadic_depth, forward_batch, inverse_batch

__all__ = [
    "Pipeline",
    "RiskRow",
    "RiskReport",
    "RateFit",
    "RatioResult",
    "adversary_risks",
    "minimax_risk",
    "calibrate_C",
    "rate_experiment",
    "rate_fit",
    "gaussian_minimax_risk",
    "gaussian_ratio_experiment",
    "heavy_tail_pipeline",
    "blocks_signal",
]

log = logging.getLogger(__name__)

RULES = ("level", "universal", "vertical_block", "identity", "discard")
_CHUNK_ELEMS = 1 << 21


@dataclass(frozen=True)
class Pipeline:
    """Optional median prefilter -> DWT -> thresholding -> inverse DWT.

    ``sigma`` is the per-sample noise level the thresholds are calibrated
    for (before the ``1/sqrt(n)`` model factor). ``level`` thresholds use
    ``C * sigma * sqrt((j - threshold_j0)_+) / sqrt(n)``; ``universal`` and
    ``vertical_block`` use the block threshold ``lam_n * sigma / sqrt(n)``.
    """

    rule: str = "level"
    wavelet: str = "daubechies4"
    j0: int = 0
    C: float = 1.0
    sigma: float = 1.0
    threshold_j0: int | None = None
    J: int = 0
    neighbors: int = 0
    prefilter: int | None = None

    def __post_init__(self):
        if self.rule not in RULES:
            raise ValueError(f"unknown rule {self.rule!r}; expected one of {RULES}")
        if self.prefilter is not None and self.prefilter < 0:
            raise ValueError("prefilter half-width must be nonnegative")

    @property
    def label(self) -> str:
        parts = [self.rule, self.wavelet]
        if self.rule == "level":
            parts.append(f"C={self.C:g}")
        if self.rule == "vertical_block":
            parts.append(f"J={self.J}")
        if self.prefilter:
            parts.append(f"med{2 * self.prefilter + 1}")
        return "/".join(parts)

    def plan(self, n: int) -> ThresholdPlan:
        h = dyadic_depth(n)
        if self.rule == "level":
            tj0 = self.j0 if self.threshold_j0 is None else self.threshold_j0
            return level_thresholds(n, tj0, self.C, self.sigma, coarsest=self.j0)
        if self.rule in ("universal", "vertical_block"):
            lam = universal_threshold(n) * self.sigma / math.sqrt(n)
            return ThresholdPlan.uniform(self.j0, h, lam)
        if self.rule == "identity":
            return ThresholdPlan.uniform(self.j0, h, 0.0)
        return ThresholdPlan.uniform(self.j0, h, math.inf)

    def shrink(self, coeffs: np.ndarray, n: int) -> np.ndarray:
        """Apply the thresholding rule to flat coefficient rows (last axis)."""
        pyr = CoeffPyramid.from_flat(coeffs, self.j0)
        lam = self.plan(n).effective()
        if self.rule == "vertical_block":
            kept = vertical_keep([np.abs(d) for d in pyr.details], lam[0], self.J, self.neighbors)
            details = [np.where(k, d, 0.0) for k, d in zip(kept, pyr.details)]
        else:
            details = [soft_threshold(d, t) for d, t in zip(pyr.details, lam)]
        return np.concatenate([pyr.scaling, *details], axis=-1)

    def denoise(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Denoise signal rows; returns ``(estimate, thresholded flat coefficients)``."""
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        if self.prefilter:
            x = median_filter(x, self.prefilter)
        coeffs = self.shrink(forward_batch(x, self.wavelet, self.j0), n)
        return inverse_batch(coeffs, self.wavelet, self.j0), coeffs


@dataclass(frozen=True)
class RiskRow:
    n: int
    estimator: str
    adversary: str
    risk: float
    se: float
    reps: int

    def csv_fields(self) -> list[str]:
        return [str(self.n), self.estimator, self.adversary, repr(self.risk), repr(self.se), str(self.reps)]


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    residual: float
    points: int
    slope_se: float = float("nan")

    def target(self, m: float) -> float:
        return -2 * m / (2 * m + 1)


@dataclass
class RiskReport:
    rows: list[RiskRow] = field(default_factory=list)
    fits: list[tuple[str, RateFit]] = field(default_factory=list)

    HEADER = ("n", "estimator", "adversary", "risk", "se", "reps")

    def add(self, row: RiskRow) -> None:
        self.rows.append(row)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.HEADER)
        for row in self.rows:
            w.writerow(row.csv_fields())
        # footer: one row per fitted quantity, in the same six columns
        for est, fit in self.fits:
            w.writerow(["fit", est, "slope", repr(fit.slope), repr(fit.slope_se), fit.points])
            w.writerow(["fit", est, "intercept", repr(fit.intercept), "", fit.points])
            w.writerow(["fit", est, "residual", repr(fit.residual), "", fit.points])
        return buf.getvalue()

    def write(self, path) -> None:
        text = self.to_csv_text()
        _atomic_write(Path(path), lambda fh: fh.write(text))

    @classmethod
    def read(cls, path) -> "RiskReport":
        rep = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if tuple(header or ()) != cls.HEADER:
                raise ValueError(f"unexpected report header {header!r}")
            for rec in reader:
                if not rec or rec[0] == "fit":
                    continue
                n, est, adv, risk, se, reps = rec
                rep.add(RiskRow(int(n), est, adv, float(risk), float(se), int(reps)))
        return rep


# ---------------------------------------------------------------------------
# Monte Carlo risk


def _chunks(reps: int, n: int):
    size = max(1, _CHUNK_ELEMS // n)
    for start in range(0, reps, size):
        yield start, min(size, reps - start)


def adversary_risks(
    pipeline: Pipeline,
    adversaries: Sequence[tuple[str, CoeffPyramid]],
    n: int,
    noise: NoiseSpec,
    reps: int,
    seed: int,
    *,
    allow_infinite: bool = False,
) -> list[RiskRow]:
    """MC risk of ``pipeline`` for each adversary, with common random numbers.

    Without a prefilter the estimator acts on ``theta + W e / sqrt(n)``
    directly in the coefficient domain, which equals the signal-domain
    pipeline by linearity and orthonormality of the transform.
    """
    if reps < 2:
        raise ValueError("reps must be >= 2")
    if noise.variance is None and not pipeline.prefilter and not allow_infinite:
        raise ValueError(f"{noise} has infinite variance; use a median prefilter")
    thetas = [pyr.flat() for _, pyr in adversaries]
    for t in thetas:
        if t.size != n:
            raise ValueError("adversary size does not match n")
    signals = None
    if pipeline.prefilter:
        signals = [inverse_batch(t, pipeline.wavelet, pipeline.j0) for t in thetas]
    sums = np.zeros(len(thetas))
    sq = np.zeros(len(thetas))
    rng = SeedSpec(seed, stream=n).generator()
    scale = 1.0 / math.sqrt(n)
    for _, size in _chunks(reps, n):
        e = draw(noise, (size, n), rng) * scale
        if signals is None:
            z = forward_batch(e, pipeline.wavelet, pipeline.j0)
        for i, theta in enumerate(thetas):
            if signals is None:
                est = pipeline.shrink(theta + z, n)
            else:
                _, est = pipeline.denoise(signals[i] + e)
            loss = np.sum((est - theta) ** 2, axis=1)
            sums[i] += loss.sum()
            sq[i] += np.dot(loss, loss)
    mean = sums / reps
    var = np.maximum(sq / reps - mean**2, 0.0) * reps / (reps - 1)
    se = np.sqrt(var / reps)
    return [
        RiskRow(n, pipeline.label, name, float(mu), float(s), reps)
        for (name, _), mu, s in zip(adversaries, mean, se)
    ]


def minimax_risk(
    pipeline: Pipeline,
    spec: BesovSpec,
    n: int,
    noise: NoiseSpec,
    reps: int,
    seed: int,
    *,
    adversaries: Sequence[tuple[str, CoeffPyramid]] | None = None,
    n_random: int = 4,
) -> RiskRow:
    """Worst MC risk over the adversary family (the sup over the ball, approximated)."""
    check_smoothness(pipeline.wavelet, spec.m)
    if spec.j0 != pipeline.j0:
        spec = replace(spec, j0=pipeline.j0)
    if adversaries is None:
        adversaries = adversary_signals(spec, n, C=pipeline.C, n_random=n_random, seed=seed)
    rows = adversary_risks(pipeline, adversaries, n, noise, reps, seed)
    return max(rows, key=lambda r: r.risk)


def calibrate_C(
    pipeline: Pipeline,
    spec: BesovSpec,
    n: int,
    noise: NoiseSpec,
    reps: int,
    seed: int,
    grid: Iterable[float] = tuple(np.round(np.arange(0.25, 4.01, 0.25), 2)),
    *,
    n_random: int = 4,
) -> tuple[float, RiskRow]:
    """Grid search for the level-threshold constant minimizing the minimax risk."""
    best = None
    for C in grid:
        row = minimax_risk(replace(pipeline, C=float(C)), spec, n, noise, reps, seed, n_random=n_random)
        log.info("calibrate n=%d C=%g risk=%.4g", n, C, row.risk)
        if best is None or row.risk < best[1].risk:
            best = (float(C), row)
    return best


def rate_fit(rows: Sequence[RiskRow]) -> RateFit:
    """Least-squares fit of ``log2 risk`` against ``log2 n``."""
    ns = sorted({r.n for r in rows})
    if len(ns) < 4:
        raise ValueError(f"need at least 4 distinct n values, got {len(ns)}")
    if len({r.estimator for r in rows}) > 1:
        raise ValueError("rows mix several estimators")
    # keep the worst adversary per n
    worst = {}
    for r in rows:
        if r.n not in worst or r.risk > worst[r.n].risk:
            worst[r.n] = r
    x = np.log2(np.array(ns, dtype=float))
    y = np.log2(np.array([worst[n].risk for n in ns]))
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = len(ns) - 2
    rms = float(np.sqrt(np.mean(resid**2)))
    s2 = float(resid @ resid / dof) if dof > 0 else float("nan")
    slope_se = math.sqrt(s2 / float(np.sum((x - x.mean()) ** 2)))
    return RateFit(float(coef[0]), float(coef[1]), rms, len(ns), slope_se)


def heavy_tail_pipeline(noise: NoiseSpec, spec: BesovSpec, base: Pipeline) -> Pipeline:
    """Add the median prefilter whose output meets the moment requirement for ``spec``."""
    if math.isinf(noise.gamma):
        return base
    l = filter_length(noise.gamma, moment_condition(spec.m, spec.p))
    return replace(base, prefilter=l)


def rate_experiment(
    pipeline: Pipeline,
    spec: BesovSpec,
    noise: NoiseSpec,
    ns: Sequence[int],
    reps: int,
    seed: int,
    *,
    calibrate: bool = True,
    grid: Iterable[float] | None = None,
    progress=None,
    n_random: int = 4,
) -> tuple[RiskReport, RateFit, Pipeline]:
    """Calibrate ``C`` once at the smallest ``n``, then measure the minimax risk per ``n``."""
    ns = sorted(ns)
    if calibrate and pipeline.rule == "level":
        kwargs = {} if grid is None else {"grid": grid}
        C, _ = calibrate_C(pipeline, spec, ns[0], noise, reps, seed, n_random=n_random, **kwargs)
        pipeline = replace(pipeline, C=C)
        if progress:
            progress(f"calibrated C={C:g} at n={ns[0]}")
    report = RiskReport()
    for n in ns:
        row = minimax_risk(pipeline, spec, n, noise, reps, seed, n_random=n_random)
        report.add(row)
        if progress:
            progress(f"n={n} risk={row.risk:.6g} se={row.se:.3g} worst={row.adversary}")
    fit = rate_fit(report.rows)
    report.fits.append((pipeline.label, fit))
    return report, fit, pipeline


# ---------------------------------------------------------------------------
# Gaussian vs non-Gaussian soft-threshold risk


def gaussian_plan_risk(theta: np.ndarray, lam_flat: np.ndarray, n: int, sigma: float = 1.0) -> float:
    """Exact risk of soft thresholding ``theta + sigma N(0, 1/n)`` coefficientwise."""
    scale = sigma / math.sqrt(n)
    return float(np.sum(gaussian_soft_risk(lam_flat / scale, theta / scale)) * scale**2)


def _flat_thresholds(pipeline: Pipeline, n: int) -> np.ndarray:
    plan = pipeline.plan(n).effective()
    parts = [np.zeros(2**pipeline.j0)]
    parts += [np.full(2**j, t) for j, t in zip(range(pipeline.j0, dyadic_depth(n)), plan)]
    return np.concatenate(parts)


def gaussian_minimax_risk(pipeline: Pipeline, adversaries, n: int, sigma: float = 1.0) -> float:
    lam = _flat_thresholds(pipeline, n)
    return max(gaussian_plan_risk(p.flat(), lam, n, sigma) for _, p in adversaries)


@dataclass(frozen=True)
class RatioResult:
    ratio: float
    gaussian_risk: float
    noise_risk: float
    noise_se: float
    gaussian_C: float
    noise_C: float


def _candidates(pipeline: Pipeline, grid) -> list[Pipeline]:
    out = [replace(pipeline, rule="level", C=float(C)) for C in grid]
    out.append(replace(pipeline, rule="universal"))
    return out


def gaussian_ratio_experiment(
    noise: NoiseSpec,
    spec: BesovSpec,
    n: int,
    reps: int,
    seed: int,
    *,
    pipeline: Pipeline | None = None,
    grid: Iterable[float] = tuple(np.round(np.arange(0.25, 4.01, 0.25), 2)),
    n_random: int = 4,
) -> RatioResult:
    """Best-threshold Gaussian minimax risk over the best-threshold risk under ``noise``.

    Both searches run over the same threshold family (level plans on ``grid``
    plus the universal threshold) and the same adversaries. The Gaussian
    side is exact; the ``noise`` side is Monte Carlo with common random
    numbers across candidates.
    """
    if not noise.symmetric:
        raise ValueError("noise must be symmetric")
    L = moment_condition(spec.m, spec.p)
    if noise.variance is None or math.isinf(noise.abs_moment(L)):
        raise ValueError(f"{noise} lacks finite moments of order {L:g}")
    pipeline = pipeline or Pipeline()
    check_smoothness(pipeline.wavelet, spec.m)
    spec = replace(spec, j0=pipeline.j0)
    adversaries = adversary_signals(spec, n, n_random=n_random, seed=seed)
    sigma = math.sqrt(noise.variance)
    cands = _candidates(replace(pipeline, sigma=sigma), list(grid))

    g_risks = [gaussian_minimax_risk(c, adversaries, n, sigma) for c in cands]
    gi = int(np.argmin(g_risks))

    worst_rows = [
        max(adversary_risks(c, adversaries, n, noise, reps, seed), key=lambda r: r.risk) for c in cands
    ]
    worst = np.array([r.risk for r in worst_rows])
    ni = int(np.argmin(worst))
    se = worst_rows[ni].se
    return RatioResult(
        ratio=float(g_risks[gi] / worst[ni]),
        gaussian_risk=g_risks[gi],
        noise_risk=float(worst[ni]),
        noise_se=se,
        gaussian_C=cands[gi].C if cands[gi].rule == "level" else float("nan"),
        noise_C=cands[ni].C if cands[ni].rule == "level" else float("nan"),
    )


_BLOCK_JUMPS = (0.1, 0.13, 0.15, 0.23, 0.25, 0.40, 0.44, 0.65, 0.76, 0.78, 0.81)
_BLOCK_HEIGHTS = (4.0, -5.0, 3.0, -4.0, 5.0, -4.2, 2.1, 4.3, -3.1, 2.1, -4.2)


def blocks_signal(n: int, scale: float = 1.0) -> np.ndarray:
    """Piecewise-constant test signal sampled at ``i / n``."""
    dyadic_depth(n)
    t = np.arange(n) / n
    f = np.zeros(n)
    for tj, hj in zip(_BLOCK_JUMPS, _BLOCK_HEIGHTS):
        f += hj * (t >= tj)
    return scale * f
