"""Exception and warning types raised across the package."""


class DynBlockadeError(Exception):
    """Base class for all package errors."""


class InvalidSpaceError(DynBlockadeError, ValueError):
    pass


class InvalidArgumentError(DynBlockadeError, ValueError):
    pass


class IntegratorFailure(DynBlockadeError, RuntimeError):
    """Raised when the state leaves the density-matrix manifold mid-run."""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} (t = {time:.6g})")
        self.time = time


class DegenerateSteadyStateError(DynBlockadeError, RuntimeError):
    pass


class ConvergenceFailure(DynBlockadeError, RuntimeError):
    pass


class HorizonError(DynBlockadeError, ValueError):
    """Requested times fall outside what has been simulated."""


class EmptyWindowError(DynBlockadeError, ValueError):
    pass


class NotSettledError(DynBlockadeError, RuntimeError):
    pass


class UnsupportedConfigurationError(DynBlockadeError, ValueError):
    pass


class TruncationWarning(UserWarning):
    """Population is reaching the top of the truncated Fock space."""
