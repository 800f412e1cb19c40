"""Wavelet thresholding under non-Gaussian noise.

Orthonormal periodic wavelet transforms, soft and vertical-block
thresholding, running-median prefiltering for heavy-tailed noise, Besov
ball utilities and a Monte Carlo risk laboratory.
"""

from .besov import *  # noqa: F401,F403
from .config import *  # noqa: F401,F403
from .experiments import *  # noqa: F401,F403
from .noise import *  # noqa: F401,F403
from .prefilter import *  # noqa: F401,F403
from .risk import *  # noqa: F401,F403
from .thresholds import *  # noqa: F401,F403
from .wavelet import *  # noqa: F401,F403

from . import besov, config, experiments, noise, prefilter, risk, thresholds, wavelet

__version__ = "0.1.0"

__all__ = (
    wavelet.__all__
    + thresholds.__all__
    + prefilter.__all__
    + noise.__all__
    + besov.__all__
    + risk.__all__
    + experiments.__all__
    + config.__all__
)
