"""Running-median prefilter for heavy-tailed noise."""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "MedianWindow",
    "median_filter",
    "median_tail_bound",
    "filter_length",
    "bias_check",
]


class MedianWindow:
    """Odd window of ``2*l + 1`` samples centred on the output index."""

    __slots__ = ("l",)

    def __init__(self, l: int):
        if int(l) != l or l < 0:
            raise ValueError(f"half-width must be a nonnegative integer, got {l}")
        self.l = int(l)

    @property
    def length(self) -> int:
        return 2 * self.l + 1

    def __repr__(self):
        return f"MedianWindow(l={self.l})"


def _half_width(l) -> int:
    return l.l if isinstance(l, MedianWindow) else MedianWindow(l).l


def median_filter(x, l) -> np.ndarray:
    """Running median of width ``2l+1`` along the last axis.

    Index ``i`` uses samples ``i-l..i+l``. Near the edges, where that window
    would leave the signal, the first (resp. last) full window is used
    instead, so the output has the input's length.
    """
    l = _half_width(l)
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    width = 2 * l + 1
    if n < width:
        raise ValueError(f"signal of length {n} is shorter than the window {width}")
    if l == 0:
        return x.copy()
    windows = sliding_window_view(x, width, axis=-1)
    # middle order statistic; exact for odd counts
    full = np.partition(windows, l, axis=-1)[..., l]
    idx = np.clip(np.arange(n) - l, 0, n - width)
    return full[..., idx]


def median_tail_bound(k: int, p_max: float) -> float:
    """Upper bound ``C(2k-1, k) * p_max**k`` on ``P(median of 2k-1 >= x)``."""
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    if not 0.0 <= p_max <= 1.0:
        raise ValueError("p_max must be a probability")
    return min(1.0, math.comb(2 * k - 1, k) * p_max**k)


def filter_length(gamma: float, L_required: float) -> int:
    """Smallest half-width ``l`` with ``(l + 1) * gamma > L_required``.

    The median of ``2l+1`` i.i.d. variables with tails ``O(x**-gamma)`` has
    finite moments of every order below ``(l + 1) * gamma``.
    """
    if gamma <= 0 or L_required <= 0:
        raise ValueError("gamma and L_required must be positive")
    if math.isinf(gamma):
        return 0
    return math.floor(L_required / gamma)


def bias_check(f, e, l) -> tuple[float, float]:
    """Median-filter bias ``sum (med(f+e) - med(e) - f)**2`` and its bound ``8 l**2 sum |df|**2``."""
    f = np.asarray(f, dtype=float)
    e = np.asarray(e, dtype=float)
    if f.shape != e.shape:
        raise ValueError("f and e must have the same length")
    l = _half_width(l)
    lhs = float(np.sum((median_filter(f + e, l) - median_filter(e, l) - f) ** 2))
    rhs = 8.0 * l * l * float(np.sum(np.diff(f) ** 2))
    return lhs, rhs
