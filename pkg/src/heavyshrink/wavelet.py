"""Orthonormal periodic discrete wavelet transforms on dyadic-length signals.

Two filters are provided: Haar and Daubechies-4. Both are applied with
periodic extension, which keeps the transform orthonormal on every dyadic
length. Signals are plain 1-D ``numpy`` arrays; the private ``_analysis`` /
``_synthesis`` helpers also accept a leading batch axis, which the Monte
Carlo code uses to transform many replicates at once.

Pyramid layout: ``scaling`` holds the ``2**j0`` coarse coefficients and
``details[i]`` holds the ``2**(j0 + i)`` detail coefficients of level
``j0 + i``, up to level ``h - 1`` for a signal of length ``2**h``.
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "WaveletSpec",
    "CoeffPyramid",
    "HAAR",
    "DAUBECHIES4",
    "get_wavelet",
    "as_signal",
    "dyadic_depth",
    "forward_dwt",
    "inverse_dwt",
    "cascade_filters",
    "tap_constants",
    "read_signal",
    "write_signal",
    "write_pyramid_csv",
    "read_pyramid_csv",
]


@dataclass(frozen=True)
class WaveletSpec:
    """Orthonormal two-channel filter bank.

    ``highpass`` is derived from ``lowpass`` by the alternating flip
    ``g[k] = (-1)**k * h[N-1-k]``, which gives first-minus-second detail
    signs for Haar.
    """

    name: str
    lowpass: np.ndarray
    holder_index: float
    highpass: np.ndarray = field(init=False)

    def __post_init__(self):
        h = np.asarray(self.lowpass, dtype=float)
        if h.ndim != 1 or h.size < 2 or h.size % 2:
            raise ValueError("lowpass must be a 1-D filter of even length")
        if self.holder_index <= 0:
            raise ValueError("holder_index must be positive")
        n_taps = h.size
        g = np.array([(-1) ** k * h[n_taps - 1 - k] for k in range(n_taps)])
        object.__setattr__(self, "lowpass", h)
        object.__setattr__(self, "highpass", g)

    @property
    def n_taps(self) -> int:
        return self.lowpass.size

    def check_orthonormal(self, atol: float = 1e-12) -> bool:
        """True when the taps pass the orthonormality conditions."""
        h, g = self.lowpass, self.highpass
        n_taps = h.size
        ok = abs(np.dot(h, h) - 1.0) <= atol and abs(g.sum()) <= atol
        for shift in range(2, n_taps, 2):
            ok &= abs(np.dot(h[shift:], h[:-shift])) <= atol
        return bool(ok)


_SQ2 = math.sqrt(2.0)
_SQ3 = math.sqrt(3.0)

HAAR = WaveletSpec("haar", np.array([1.0, 1.0]) / _SQ2, holder_index=1.0)
DAUBECHIES4 = WaveletSpec(
    "daubechies4",
    np.array([1 + _SQ3, 3 + _SQ3, 3 - _SQ3, 1 - _SQ3]) / (4 * _SQ2),
    # Hölder exponent of the D4 wavelet (Daubechies 1992, Table 7.2).
    holder_index=0.550,
)

_WAVELETS = {"haar": HAAR, "daubechies4": DAUBECHIES4, "d4": DAUBECHIES4, "db2": DAUBECHIES4}


def get_wavelet(spec: str | WaveletSpec) -> WaveletSpec:
    if isinstance(spec, WaveletSpec):
        return spec
    try:
        return _WAVELETS[spec.lower()]
    except KeyError:
        raise ValueError(f"unknown wavelet {spec!r}; expected one of {sorted(_WAVELETS)}") from None


def check_smoothness(spec: str | WaveletSpec, m: float) -> None:
    """Warn when Haar is used for a smoothness class it cannot characterize."""
    if get_wavelet(spec).name == "haar" and m >= 1:
        warnings.warn(
            f"Haar only characterizes smoothness m < 1 (got m={m}); use daubechies4",
            stacklevel=2,
        )


def dyadic_depth(n: int) -> int:
    """Return ``h`` with ``n == 2**h``; raise for anything else."""
    n = int(n)
    if n < 2 or n & (n - 1):
        raise ValueError(f"length must be a power of two >= 2, got {n}")
    return n.bit_length() - 1


def as_signal(samples) -> np.ndarray:
    """Validate a 1-D, finite, dyadic-length sample vector."""
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1:
        raise ValueError("signal must be one-dimensional")
    dyadic_depth(x.size)
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains non-finite values")
    return x


@dataclass
class CoeffPyramid:
    j0: int
    scaling: np.ndarray
    details: list[np.ndarray]

    def __post_init__(self):
        if self.j0 < 0:
            raise ValueError("j0 must be nonnegative")
        self.scaling = np.asarray(self.scaling, dtype=float)
        self.details = [np.asarray(d, dtype=float) for d in self.details]
        if self.scaling.shape[-1] != 2**self.j0:
            raise ValueError(f"scaling must have {2**self.j0} entries, got {self.scaling.shape[-1]}")
        if not self.details:
            raise ValueError("pyramid needs at least one detail level")
        for i, d in enumerate(self.details):
            if d.shape[-1] != 2 ** (self.j0 + i):
                raise ValueError(
                    f"level {self.j0 + i} must have {2 ** (self.j0 + i)} entries, got {d.shape[-1]}"
                )

    @property
    def h(self) -> int:
        return self.j0 + len(self.details)

    @property
    def n(self) -> int:
        return 2**self.h

    @property
    def levels(self) -> range:
        return range(self.j0, self.h)

    def level(self, j: int) -> np.ndarray:
        if not self.j0 <= j < self.h:
            raise IndexError(f"level {j} outside [{self.j0}, {self.h - 1}]")
        return self.details[j - self.j0]

    def flat(self) -> np.ndarray:
        """All coefficients, scaling first then details coarse to fine."""
        return np.concatenate([self.scaling, *self.details], axis=-1)

    @classmethod
    def from_flat(cls, values, j0: int) -> "CoeffPyramid":
        values = np.asarray(values, dtype=float)
        h = dyadic_depth(values.shape[-1])
        if not 0 <= j0 < h:
            raise ValueError(f"j0 must lie in [0, {h - 1}]")
        cuts = [2**j for j in range(j0, h + 1)]
        scaling = values[..., : cuts[0]]
        details = [values[..., a:b] for a, b in zip(cuts[:-1], cuts[1:])]
        return cls(j0, scaling, details)

    def copy(self) -> "CoeffPyramid":
        return CoeffPyramid(self.j0, self.scaling.copy(), [d.copy() for d in self.details])

    def zeros_like(self) -> "CoeffPyramid":
        return CoeffPyramid(
            self.j0, np.zeros_like(self.scaling), [np.zeros_like(d) for d in self.details]
        )

    def scaled(self, factor: float) -> "CoeffPyramid":
        return CoeffPyramid(self.j0, self.scaling * factor, [d * factor for d in self.details])

    def energy(self) -> float:
        return float(np.sum(self.flat() ** 2))

    def same_shape(self, other: "CoeffPyramid") -> bool:
        return self.j0 == other.j0 and self.h == other.h

    def rows(self):
        """Yield ``(level, index, value)``; scaling rows use level ``-1``."""
        for k, v in enumerate(self.scaling):
            yield -1, k, float(v)
        for j, d in zip(self.levels, self.details):
            for k, v in enumerate(d):
                yield j, k, float(v)


# ---------------------------------------------------------------------------
# filter bank


def _analysis(x: np.ndarray, spec: WaveletSpec) -> tuple[np.ndarray, np.ndarray]:
    """One periodic analysis step along the last axis."""
    n = x.shape[-1]
    half = n // 2
    approx = np.zeros(x.shape[:-1] + (half,))
    detail = np.zeros_like(approx)
    base = 2 * np.arange(half)
    for m, (hm, gm) in enumerate(zip(spec.lowpass, spec.highpass)):
        xm = x[..., (base + m) % n]
        approx += hm * xm
        detail += gm * xm
    return approx, detail


def _synthesis(approx: np.ndarray, detail: np.ndarray, spec: WaveletSpec) -> np.ndarray:
    """Adjoint (= inverse) of :func:`_analysis`."""
    half = approx.shape[-1]
    n = 2 * half
    out = np.zeros(approx.shape[:-1] + (n,))
    base = 2 * np.arange(half)
    for m, (hm, gm) in enumerate(zip(spec.lowpass, spec.highpass)):
        idx = (base + m) % n
        # indices in idx are distinct for fixed m, so fancy-index += is safe
        out[..., idx] += hm * approx + gm * detail
    return out


def _forward_array(x: np.ndarray, spec: WaveletSpec, j0: int) -> tuple[np.ndarray, list]:
    h = dyadic_depth(x.shape[-1])
    if not 0 <= j0 <= h - 1:
        raise ValueError(f"j0 must lie in [0, {h - 1}], got {j0}")
    details = []
    approx = x
    for _ in range(h - j0):
        approx, d = _analysis(approx, spec)
        details.append(d)
    details.reverse()
    return approx, details


def _inverse_array(scaling: np.ndarray, details: list, spec: WaveletSpec) -> np.ndarray:
    approx = scaling
    for d in details:
        approx = _synthesis(approx, d, spec)
    return approx


def forward_dwt(signal, spec: str | WaveletSpec = "haar", j0: int = 0) -> CoeffPyramid:
    """Orthonormal DWT of a length ``2**h`` signal down to level ``j0``.

    For Haar, ``d[j][k] = 2**(-(h-j)/2) * (sum of the first half of block k
    minus sum of its second half)``, blocks having width ``2**(h-j)``.

    >>> forward_dwt([1.0, -1.0]).details[0]
    array([1.41421356])
    """
    x = as_signal(signal)
    scaling, details = _forward_array(x, get_wavelet(spec), j0)
    return CoeffPyramid(j0, scaling, details)


def inverse_dwt(pyramid: CoeffPyramid, spec: str | WaveletSpec = "haar") -> np.ndarray:
    if not isinstance(pyramid, CoeffPyramid):
        raise TypeError("inverse_dwt expects a CoeffPyramid")
    # re-validate: the fields are mutable
    CoeffPyramid(pyramid.j0, pyramid.scaling, pyramid.details)
    return _inverse_array(pyramid.scaling, pyramid.details, get_wavelet(spec))


def forward_batch(x: np.ndarray, spec: str | WaveletSpec, j0: int) -> np.ndarray:
    """Forward transform of each row of ``x``; returns flat coefficient rows."""
    scaling, details = _forward_array(np.asarray(x, dtype=float), get_wavelet(spec), j0)
    return np.concatenate([scaling, *details], axis=-1)


def inverse_batch(coeffs: np.ndarray, spec: str | WaveletSpec, j0: int) -> np.ndarray:
    """Inverse of :func:`forward_batch`."""
    pyr = CoeffPyramid.from_flat(coeffs, j0)
    return _inverse_array(pyr.scaling, pyr.details, get_wavelet(spec))


# ---------------------------------------------------------------------------
# cascade


def cascade_filters(spec: str | WaveletSpec, depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Taps of a scaling function / wavelet expressed ``depth`` levels finer.

    Returns ``(u, v)`` with ``phi_{j,0} = sum_i u[i] phi_{j+depth,i}`` and
    ``psi_{j,0} = sum_i v[i] phi_{j+depth,i}``, without periodic wrapping.
    Both have ``(2**depth - 1) * (N - 1) + 1`` taps for an ``N``-tap filter.
    """
    spec = get_wavelet(spec)
    if depth < 1:
        raise ValueError("depth must be >= 1")
    h = spec.lowpass
    u, v = h.copy(), spec.highpass.copy()
    for d in range(1, depth):
        # refine one level: each level-(j+d) scaling function splits by h
        up_u = np.zeros(2 * (u.size - 1) + 1)
        up_v = np.zeros_like(up_u)
        up_u[::2], up_v[::2] = u, v
        u, v = np.convolve(up_u, h), np.convolve(up_v, h)
    return u, v


def tap_constants(spec: str | WaveletSpec, max_depth: int) -> np.ndarray:
    """``2**(d/2) * max|v_d|`` for ``d = 1..max_depth`` (decay constant per depth)."""
    out = np.empty(max_depth)
    for d in range(1, max_depth + 1):
        u, v = cascade_filters(spec, d)
        out[d - 1] = 2 ** (d / 2) * max(np.abs(u).max(), np.abs(v).max())
    return out


# ---------------------------------------------------------------------------
# file formats


def read_signal(path) -> np.ndarray:
    """Read a signal: raw little-endian float64 for ``.f64``, else one float per line."""
    path = Path(path)
    if path.suffix == ".f64":
        data = np.fromfile(path, dtype="<f8")
    else:
        with open(path) as fh:
            lines = [ln.strip() for ln in fh]
        data = np.array([float(ln) for ln in lines if ln], dtype=float)
    return as_signal(data)


def _atomic_write(path: Path, writer, mode: str = "w") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if "b" in mode else {"newline": ""})) as fh:
            writer(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_signal(path, samples) -> None:
    x = np.asarray(samples, dtype=float)
    path = Path(path)
    if path.suffix == ".f64":
        _atomic_write(path, lambda fh: fh.write(x.astype("<f8").tobytes()), mode="wb")
    else:
        _atomic_write(path, lambda fh: fh.writelines(f"{v!r}\n" for v in x.tolist()))


def write_pyramid_csv(path, pyramid: CoeffPyramid) -> None:
    def _write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", "index", "value"])
        for j, k, v in pyramid.rows():
            w.writerow([j, k, repr(v)])

    _atomic_write(Path(path), _write)


def read_pyramid_csv(path) -> CoeffPyramid:
    scaling: dict[int, float] = {}
    levels: dict[int, dict[int, float]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            j, k, v = int(row["level"]), int(row["index"]), float(row["value"])
            (scaling if j < 0 else levels.setdefault(j, {}))[k] = v
    if not levels:
        raise ValueError("pyramid file has no detail rows")
    j0 = min(levels)
    if sorted(levels) != list(range(j0, max(levels) + 1)):
        raise ValueError("pyramid file skips a level")

    def _dense(d: dict[int, float], size: int) -> np.ndarray:
        if sorted(d) != list(range(size)):
            raise ValueError("pyramid file has missing or extra indices")
        return np.array([d[k] for k in range(size)])

    return CoeffPyramid(
        j0,
        _dense(scaling, 2**j0),
        [_dense(levels[j], 2**j) for j in range(j0, max(levels) + 1)],
    )
