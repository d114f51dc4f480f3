"""Exception types raised by the simulation engine."""


class LambdaCavityError(Exception):
    """Base class for all package errors."""


class DomainError(LambdaCavityError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class TruncationError(LambdaCavityError, ValueError):
    """The Fock truncation is too small for the requested tolerance."""

    def __init__(self, message, required_kmax=None):
        super().__init__(message)
        self.required_kmax = required_kmax


class IntegrityError(LambdaCavityError, RuntimeError):
    """A density matrix violates a structural invariant (Hermiticity, real diagonal)."""


class DivergenceError(LambdaCavityError, FloatingPointError):
    """Non-finite values appeared during time stepping."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConvergenceError(LambdaCavityError, RuntimeError):
    """An iterative procedure (quadrature, steady-state search) did not converge."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class ConfigError(LambdaCavityError, ValueError):
    """Invalid run configuration."""


class AnalyticValidityWarning(UserWarning):
    """A fitted closed-form expression is evaluated outside its validated range."""
