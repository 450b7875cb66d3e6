"""Exception and warning types shared across the library."""


class SzaszLabError(Exception):
    """Base class for numerical failures raised by this package."""


class DomainError(SzaszLabError, ValueError):
    """A point lies outside the region where an operation is defined."""


class ConvergenceError(SzaszLabError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NumericalInstabilityError(SzaszLabError):
    """A numerically derived quantity lost a property it must have."""


class TruncationLimitError(SzaszLabError):
    """A lattice window grew past the configured term cap."""


class DependencyError(SzaszLabError):
    """A required input (e.g. a monomial norm source) is unavailable."""


class ExpressionError(SzaszLabError, ValueError):
    """An expression string is outside the supported grammar."""


class DivergenceWarning(RuntimeWarning):
    """A quadrature window kept growing without the integral stabilising."""


class ConditioningWarning(RuntimeWarning):
    """A least-squares fit was solved with a poorly conditioned design."""
