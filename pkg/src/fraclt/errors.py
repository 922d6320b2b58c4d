"""Exception types shared across the package.

The CLI maps :class:`ConfigurationError` to exit status 1 and
:class:`NumericalError` to exit status 2.
"""


class FracltError(Exception):
    """Base class for package errors."""


class ConfigurationError(FracltError, ValueError):
    """Invalid parameters, inadmissible functional or malformed input."""


class UnsupportedRegimeError(ConfigurationError):
    """Raised for H = 3/4, which sits between the CLT and Rosenblatt regimes."""


class NumericalError(FracltError, ArithmeticError):
    """A numerical procedure failed to reach its accuracy target."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class AlgebraViolationError(NumericalError):
    """A pointwise algebraic identity failed beyond roundoff (indexing bug)."""


class ResourceError(FracltError, MemoryError):
    """A requested computation exceeds a configured size cap."""
