"""Exception hierarchy shared across the package.

The CLI maps :class:`ValidationError` (and its subclasses) to exit code 2 and
:class:`NumericalError` to exit code 3.
"""


class PoseAnimError(Exception):
    """Base class for all package errors."""


class ValidationError(PoseAnimError, ValueError):
    """Input data or files failed validation."""


class DimensionError(ValidationError):
    """Tensor shapes are incompatible with an operation."""


class ConfigError(ValidationError):
    """A configuration value is invalid or inconsistent."""


class NumericalError(PoseAnimError, ArithmeticError):
    """A NaN/Inf appeared, or training diverged."""
