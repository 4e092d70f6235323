"""Density estimation for a random time T observed through a self-similar process.

Given i.i.d. observations of ``|Y_T|`` for an H-self-similar process ``Y``
independent of T, the density of T is recovered by dividing Mellin
transforms and inverting along a vertical line with a cut-off.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    HypothesisViolation,
    MellinStopError,
    NumericalError,
    PoleError,
    QuadratureError,
    StripError,
    SymmetryError,
    ValidationError,
)
from .estimator import CutoffRule, EstimatorConfig, cutoff_value, estimate_density  # noqa: E402
from .mellin import MellinFunction, MellinStrip, SampleBatch  # noqa: E402
from .processes import bessel, gamma_ss, gaussian_ss, make_process, sample_observations  # noqa: E402
from .stopping_times import make_stopping_time  # noqa: E402

__all__ = [
    "__version__",
    "CutoffRule",
    "EstimatorConfig",
    "HypothesisViolation",
    "MellinFunction",
    "MellinStopError",
    "MellinStrip",
    "NumericalError",
    "PoleError",
    "QuadratureError",
    "SampleBatch",
    "StripError",
    "SymmetryError",
    "ValidationError",
    "bessel",
    "cutoff_value",
    "estimate_density",
    "gamma_ss",
    "gaussian_ss",
    "make_process",
    "make_stopping_time",
    "sample_observations",
]
