"""Exception hierarchy shared by the simulation, analysis and CLI layers."""


class CascadeError(Exception):
    """Base class for all package errors."""


class InvalidStateError(CascadeError, ValueError):
    """A matrix that should be a density matrix is not one (within tolerance)."""


class ParameterError(CascadeError, ValueError):
    """Physically invalid or inconsistent parameters."""


class IntegrationError(CascadeError, RuntimeError):
    """Time integration failed; ``time`` carries the offending instant."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class ConvergenceError(CascadeError, RuntimeError):
    """The quasi-stationary cycle was not reached within the settle budget."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class FloquetSingularError(CascadeError, ArithmeticError):
    """The truncated harmonic (Floquet) linear system is singular."""


class FitError(CascadeError, RuntimeError):
    """Least-squares calibration did not converge; ``result`` is the best-so-far."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
