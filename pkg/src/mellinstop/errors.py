"""Exception types raised across the package."""


class MellinStopError(Exception):
    """Base class for all package errors."""


class ValidationError(MellinStopError, ValueError):
    """Invalid parameters or configuration."""


class PoleError(ValidationError):
    """Argument sits on a pole of the gamma function."""


class StripError(ValidationError):
    """Argument lies outside the strip where a Mellin transform converges."""


class HypothesisViolation(ValidationError):
    """The asymptotic-normality preconditions fail for the requested configuration."""


class NumericalError(MellinStopError, ArithmeticError):
    """A numerical routine failed to reach its requested accuracy."""


class QuadratureError(NumericalError):
    """Quadrature error estimate exceeds the requested tolerance."""


class SymmetryError(NumericalError):
    """An inversion integral has a non-negligible imaginary part."""
