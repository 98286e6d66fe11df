"""Exception types raised across the package."""


class ConformalError(Exception):
    """Base class for all package errors."""


class InvalidInputError(ConformalError, ValueError):
    """Input data or parameters violate an operation's preconditions."""


class InfeasibleCorrectionError(ConformalError, ValueError):
    """A level correction pushed the fitted miscoverage level outside (0, 1)."""

    def __init__(self, message: str, min_n: int | None = None):
        super().__init__(message)
        self.min_n = min_n


class UnboundedProblemError(ConformalError, ArithmeticError):
    """The quantile-regression LP has no finite minimizer."""


class UnsupportedOperationError(ConformalError, TypeError):
    """Operation is not defined for this kind of rule."""
