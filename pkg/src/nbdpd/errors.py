"""Exception hierarchy shared by every module."""


class NBDPDError(Exception):
    """Base class for library errors."""


class DomainError(NBDPDError, ValueError):
    """An argument lies outside the domain of a function."""


class ParameterError(NBDPDError, ValueError):
    """A parameter violates a family invariant."""


class IntegrationError(NBDPDError, ArithmeticError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message, value=None, error=None):
        super().__init__(message)
        self.value = value
        self.error = error


class ConvergenceError(NBDPDError, ArithmeticError):
    """An iterative solver did not converge."""
