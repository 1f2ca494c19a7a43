"""Exception hierarchy for the escapepath library.

Every error carries the process exit code the command-line front end maps it to.
"""
from typing import Optional


class EscapePathError(Exception):
    """Base class for all library errors"""
    exit_code: int = 1


class InvalidArgumentError(EscapePathError, ValueError):
    """Non-finite or otherwise malformed numerical input"""
    exit_code = 1


class ConfigError(EscapePathError):
    """Unknown, missing or malformed configuration values"""
    exit_code = 1


class UnsupportedModelError(EscapePathError):
    """The model lacks a structure the operation needs (potential, symmetry)"""
    exit_code = 2


class NonHyperbolicError(EscapePathError):
    """An equilibrium has an eigenvalue too close to the imaginary axis"""
    exit_code = 2

    def __init__(self, message: str, eigenvalues=None):
        super().__init__(message)
        self.eigenvalues = eigenvalues


class IllPosedProblemError(EscapePathError):
    """Boundary and phase conditions do not match the unknown count"""
    exit_code = 2


class InsufficientDataError(EscapePathError):
    """Too few exits in an ensemble for the requested statistic"""
    exit_code = 2


class NoEquilibriumError(EscapePathError):
    """Newton iteration for an equilibrium failed to converge"""
    exit_code = 3


class NoConnectionError(EscapePathError):
    """Newton iteration for a connecting orbit failed to converge"""
    exit_code = 3

    def __init__(self, message: str, last_residual: float):
        super().__init__(f"{message} (last residual {last_residual:.3e})")
        self.last_residual = last_residual


class ContinuationStuckError(EscapePathError):
    """Continuation step fell below the minimum step size"""
    exit_code = 3

    def __init__(self, message: str, last_good_mu: float):
        super().__init__(f"{message} (last good mu = {last_good_mu!r})")
        self.last_good_mu = last_good_mu


class SingularSystemError(EscapePathError):
    """A linear collocation system could not be factorised"""
    exit_code = 3

    def __init__(self, message: str, condition: Optional[float] = None):
        if condition is not None:
            message = f"{message} (condition estimate {condition:.3e})"
        super().__init__(message)
        self.condition = condition


class NearNontransversalityError(SingularSystemError):
    """The correction problem is too ill-conditioned for a transverse base orbit"""
    exit_code = 3
