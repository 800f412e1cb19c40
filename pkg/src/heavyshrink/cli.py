"""Command-line front end.

Exit codes: 0 success, 2 data error, 3 config error, 4 numerical failure
(including failed bound checks and an exceeded runtime budget).
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, estimator_from, load_config, tomllib
from .besov import BesovSpec
from .experiments import (
    RiskReport,
    RiskRow,
    calibrate_C,
    gaussian_ratio_experiment,
    minimax_risk,
    rate_fit,
)
from .noise import NoiseSpec, parse_noise
from .risk import fourth_moment_sandwich, tail_bound_check
from .prefilter import median_filter
from .thresholds import RetentionMask, vertical_keep
from .wavelet import CoeffPyramid, _atomic_write, forward_dwt, read_signal, write_pyramid_csv, write_signal

log = logging.getLogger("heavyshrink")

EXIT_OK, EXIT_DATA, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3, 4


class BudgetExceeded(RuntimeError):
    pass


class NumericalFailure(RuntimeError):
    pass


def _sidecar(out: Path, tag: str) -> Path:
    return out.with_name(f"{out.stem}.{tag}.csv")


# ---------------------------------------------------------------------------
# denoise


def cmd_denoise(args) -> int:
    try:
        x = read_signal(args.input)
    except (OSError, ValueError) as exc:
        log.error("bad input signal: %s", exc)
        return EXIT_DATA
    data = {}
    if args.config:
        try:
            with open(args.config, "rb") as fh:
                data = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            log.error("config error: %s", exc)
            return EXIT_CONFIG
    try:
        unknown = set(data) - {"noise", "besov", "estimator"}
        if unknown:
            raise ConfigError(f"unknown key(s) for denoise: {', '.join(sorted(unknown))}")
        noise = parse_noise(str(data.get("noise", "gaussian")))
        btab = data.get("besov", {})
        besov = BesovSpec(**{k: btab[k] for k in btab}) if btab else BesovSpec(1.0)
        pipe, _ = estimator_from(data.get("estimator", {}), besov, noise)
    except (ConfigError, ValueError, TypeError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG

    est, coeffs = pipe.denoise(x)
    if not np.all(np.isfinite(est)):
        log.error("denoised signal is not finite")
        return EXIT_NUMERIC
    out = Path(args.out or Path(args.input).with_suffix(".denoised" + Path(args.input).suffix))
    write_signal(out, est)
    pyr = CoeffPyramid.from_flat(coeffs, pipe.j0)
    write_pyramid_csv(_sidecar(out, "coeffs"), pyr)
    if pipe.rule == "vertical_block":
        _retention_mask(pipe, x).to_csv(_sidecar(out, "mask"))
    log.info("wrote %s (%s)", out, pipe.label)
    return EXIT_OK


def _retention_mask(pipe, x) -> RetentionMask:
    y = median_filter(x, pipe.prefilter) if pipe.prefilter else x
    noisy = forward_dwt(y, pipe.wavelet, pipe.j0)
    lam = pipe.plan(x.size).effective()[0]
    kept = vertical_keep([np.abs(d) for d in noisy.details], lam, pipe.J, pipe.neighbors)
    return RetentionMask(pipe.j0, kept)


# ---------------------------------------------------------------------------
# experiment


def _check_budget(start: float, budget: float | None) -> None:
    if budget is not None and time.monotonic() - start > budget:
        raise BudgetExceeded(f"runtime budget of {budget:g}s exceeded")


def _finite(row: RiskRow) -> RiskRow:
    if not (math.isfinite(row.risk) and math.isfinite(row.se)):
        raise NumericalFailure(f"non-finite risk at n={row.n}: {row}")
    return row


def run_experiment(cfg: ExperimentConfig) -> RiskReport:
    start = time.monotonic()
    pipe = cfg.pipeline
    report = RiskReport()
    if cfg.kind == "ratio":
        for n in sorted(cfg.ns):
            res = gaussian_ratio_experiment(
                cfg.noise, cfg.besov, n, cfg.reps, cfg.seed, pipeline=pipe, grid=cfg.grid, n_random=cfg.n_random
            )
            label = f"ratio/{cfg.noise}"
            report.add(_finite(RiskRow(n, label, "gaussian_best", res.gaussian_risk, 0.0, cfg.reps)))
            report.add(_finite(RiskRow(n, label, "noise_best", res.noise_risk, res.noise_se, cfg.reps)))
            se = res.ratio * res.noise_se / res.noise_risk
            report.add(_finite(RiskRow(n, label, "ratio", res.ratio, se, cfg.reps)))
            log.info("n=%d ratio=%.4f", n, res.ratio)
            _check_budget(start, cfg.budget_seconds)
        return report

    ns = sorted(cfg.ns)
    if cfg.calibrate and pipe.rule == "level":
        C, _ = calibrate_C(pipe, cfg.besov, ns[0], cfg.noise, cfg.reps, cfg.seed, cfg.grid, n_random=cfg.n_random)
        pipe = replace(pipe, C=C)
        log.info("calibrated C=%g at n=%d", C, ns[0])
        _check_budget(start, cfg.budget_seconds)
    for n in ns:
        row = _finite(minimax_risk(pipe, cfg.besov, n, cfg.noise, cfg.reps, cfg.seed, n_random=cfg.n_random))
        report.add(row)
        log.info("n=%d risk=%.6g se=%.3g worst=%s", n, row.risk, row.se, row.adversary)
        _check_budget(start, cfg.budget_seconds)
    if cfg.kind == "rate":
        fit = rate_fit(report.rows)
        report.fits.append((pipe.label, fit))
        log.info("slope=%.4f (target %.4f)", fit.slope, -2 * cfg.besov.m / (2 * cfg.besov.m + 1))
    return report


def _fit_csv(report: RiskReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["estimator", "slope", "slope_se", "intercept", "residual", "points"])
    for est, fit in report.fits:
        w.writerow([est, repr(fit.slope), repr(fit.slope_se), repr(fit.intercept), repr(fit.residual), fit.points])
    return buf.getvalue()


def cmd_experiment(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.reps is not None:
            cfg.reps = args.reps
        if args.out is not None:
            cfg.out = Path(args.out)
        cfg.validate()
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    if cfg.out is None:
        log.error("config error: no output path (set `out` or pass --out)")
        return EXIT_CONFIG
    if args.threads not in (None, 1):
        log.info("running single-threaded; --threads=%s ignored", args.threads)
    try:
        report = run_experiment(cfg)
    except (BudgetExceeded, NumericalFailure, FloatingPointError) as exc:
        log.error("%s", exc)
        return EXIT_NUMERIC
    except ValueError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    report.write(cfg.out)
    if report.fits:
        text = _fit_csv(report)
        _atomic_write(_sidecar(cfg.out, "fit"), lambda fh: fh.write(text))
    log.info("wrote %s", cfg.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify-bounds


def bound_suite(reps: int, seed: int) -> list[tuple[str, float, float, bool]]:
    """All probability-bound and fourth-moment checks as (name, empirical, bound, passed)."""
    rows = []
    checks = [
        ("kolmogorov", {"n": 400, "x": 2.0}),
        ("kolmogorov", {"n": 400, "x": 3.0, "base": NoiseSpec("uniform_sym")}),
        ("truncated_moment", {"n": 400}),
        ("d_dependent", {"n": 400, "D": 3}),
        ("d_dependent", {"n": 400, "D": 5, "base": NoiseSpec("uniform_sym")}),
    ]
    for i, (kind, params) in enumerate(checks):
        res = tail_bound_check(kind, params, reps, seed + i)
        rows.append((f"{kind}:{params.get('base', 'bernoulli_sym')}", float(res.empirical), float(res.bound), bool(res.passed)))
    w = np.ones(64) / 8.0
    for i, fam in enumerate(("gaussian", "bernoulli_sym", "uniform_sym")):
        res = fourth_moment_sandwich(w, NoiseSpec(fam), reps, seed + 100 + i)
        rows.append((f"fourth_moment:{fam}", float(res.estimate), float(res.upper), bool(res.passed)))
    return rows


def cmd_verify_bounds(args) -> int:
    reps = args.reps or 1_000_000
    seed = args.seed if args.seed is not None else 0
    rows = bound_suite(reps, seed)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["check", "empirical", "bound", "passed"])
    for name, emp, bound, ok in rows:
        w.writerow([name, repr(emp), repr(bound), int(ok)])
        log.info("%-32s empirical=%.4g bound=%.4g %s", name, emp, bound, "PASS" if ok else "FAIL")
    if args.out:
        _atomic_write(Path(args.out), lambda fh: fh.write(buf.getvalue()))
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK if all(r[3] for r in rows) else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# rate-fit


def cmd_rate_fit(args) -> int:
    try:
        report = RiskReport.read(args.report)
    except (OSError, ValueError) as exc:
        log.error("bad report: %s", exc)
        return EXIT_DATA
    by_est: dict[str, list[RiskRow]] = {}
    for row in report.rows:
        by_est.setdefault(row.estimator, []).append(row)
    out = RiskReport()
    for est, rows in by_est.items():
        try:
            out.fits.append((est, rate_fit(rows)))
        except ValueError as exc:
            log.error("%s: %s", est, exc)
            return EXIT_DATA
    text = _fit_csv(out)
    if args.out:
        _atomic_write(Path(args.out), lambda fh: fh.write(text))
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heavyshrink", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--reps", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("denoise", help="denoise a signal file")
    p.add_argument("input")
    p.add_argument("--config", default=None, help="TOML with [estimator] (and optional noise, besov)")
    common(p)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("experiment", help="run a configured risk experiment")
    p.add_argument("config")
    common(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("verify-bounds", help="run the probability-bound suite")
    common(p)
    p.set_defaults(func=cmd_verify_bounds)

    p = sub.add_parser("rate-fit", help="fit log-log slopes to an existing report")
    p.add_argument("report")
    common(p)
    p.set_defaults(func=cmd_rate_fit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    if getattr(args, "reps", None) is not None and args.reps < 1:
        log.error("config error: --reps must be positive")
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
