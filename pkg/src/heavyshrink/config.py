"""Experiment configuration files.

The format is TOML restricted to top-level keys plus one ``[estimator]``
section::

    kind = "rate"                 # rate | ratio | minimax
    n = [256, 512, 1024, 2048]
    reps = 2000
    seed = 1
    out = "report.csv"
    noise = "cauchy"              # or "student_t(3)", "uniform_sym*0.5", ...
    besov = { m = 1.0, p = 2, q = 2, A = 1.0 }
    budget_seconds = 900          # optional

    [estimator]
    wavelet = "daubechies4"
    rule = "level"                # level | universal | vertical_block | identity | discard
    C = 1.0
    calibrate = true              # grid-search C at the smallest n
    prefilter = "auto"            # "auto", false, or a half-width l
    j0 = 0
    J = 0
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .besov import BesovSpec
from .experiments import Pipeline, heavy_tail_pipeline
from .noise import NoiseSpec, parse_noise
from .wavelet import dyadic_depth

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "estimator_from"]

KINDS = ("rate", "ratio", "minimax")
_TOP_KEYS = {"kind", "n", "reps", "seed", "out", "noise", "besov", "budget_seconds", "estimator", "grid", "n_random"}
_BESOV_KEYS = {"m", "p", "q", "A", "j0"}
_EST_KEYS = {"wavelet", "rule", "C", "sigma", "calibrate", "prefilter", "j0", "threshold_j0", "J", "neighbors"}


class ConfigError(ValueError):
    """Invalid configuration (CLI exit code 3)."""


@dataclass
class ExperimentConfig:
    besov: BesovSpec
    noise: NoiseSpec
    pipeline: Pipeline
    ns: list[int]
    reps: int
    seed: int
    out: Path | None = None
    kind: str = "rate"
    calibrate: bool = True
    budget_seconds: float | None = None
    grid: list[float] = field(default_factory=lambda: [0.25 * i for i in range(1, 17)])
    n_random: int = 4

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}")
        if self.reps < 1:
            raise ConfigError("reps must be a positive integer")
        if not self.ns:
            raise ConfigError("n must list at least one sample size")
        for n in self.ns:
            try:
                dyadic_depth(n)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if self.kind == "rate" and len(set(self.ns)) < 4:
            raise ConfigError("a rate experiment needs at least 4 distinct n")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.budget_seconds is not None and self.budget_seconds <= 0:
            raise ConfigError("budget_seconds must be positive")
        if not self.grid or any(c <= 0 for c in self.grid):
            raise ConfigError("grid must hold positive constants")


def _unknown(keys, allowed, where):
    extra = set(keys) - allowed
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(extra))}")


def _int(value, name) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{name} must be an integer")
    return value


def estimator_from(table: dict, besov: BesovSpec, noise: NoiseSpec) -> tuple[Pipeline, bool]:
    _unknown(table, _EST_KEYS, "[estimator]")
    kw = {}
    for key in ("wavelet", "rule"):
        if key in table:
            kw[key] = str(table[key])
    for key in ("C", "sigma"):
        if key in table:
            kw[key] = float(table[key])
    for key in ("j0", "threshold_j0", "J", "neighbors"):
        if key in table:
            kw[key] = _int(table[key], key)
    prefilter = table.get("prefilter", "auto")
    calibrate = bool(table.get("calibrate", True))
    try:
        pipe = Pipeline(**kw)
        if prefilter == "auto":
            pipe = heavy_tail_pipeline(noise, besov, pipe)
        elif prefilter is False:
            pass
        else:
            pipe = Pipeline(**{**kw, "prefilter": _int(prefilter, "prefilter")})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return pipe, calibrate


def parse_config(data: dict, base_dir: Path | None = None) -> ExperimentConfig:
    _unknown(data, _TOP_KEYS, "config")
    try:
        btab = data.get("besov", {"m": 1.0})
        if not isinstance(btab, dict):
            raise ConfigError("besov must be an inline table")
        _unknown(btab, _BESOV_KEYS, "besov")
        besov = BesovSpec(
            m=float(btab.get("m", 1.0)),
            p=float(btab.get("p", 2.0)),
            q=float(btab.get("q", 2.0)),
            A=float(btab.get("A", 1.0)),
            j0=_int(btab.get("j0", 0), "besov.j0"),
        )
        noise = parse_noise(str(data.get("noise", "gaussian")))
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    pipe, calibrate = estimator_from(data.get("estimator", {}), besov, noise)
    ns = data.get("n", [256, 512, 1024, 2048])
    if isinstance(ns, int):
        ns = [ns]
    out = data.get("out")
    if out is not None:
        out = Path(out)
        if base_dir is not None and not out.is_absolute():
            out = base_dir / out
    cfg = ExperimentConfig(
        besov=besov,
        noise=noise,
        pipeline=pipe,
        ns=[_int(n, "n") for n in ns],
        reps=_int(data.get("reps", 1000), "reps"),
        seed=_int(data.get("seed", 0), "seed"),
        out=out,
        kind=str(data.get("kind", "rate")),
        calibrate=calibrate,
        budget_seconds=data.get("budget_seconds"),
        n_random=_int(data.get("n_random", 4), "n_random"),
    )
    if "grid" in data:
        cfg.grid = [float(c) for c in data["grid"]]
    cfg.validate()
    if noise.variance is None and not cfg.pipeline.prefilter:
        raise ConfigError(f"{noise} has infinite variance; enable the median prefilter")
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data, base_dir=path.parent)
