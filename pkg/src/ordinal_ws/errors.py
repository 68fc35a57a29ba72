"""Exception types raised across the package."""


class DomainError(ValueError):
    """Argument outside the domain of a function."""


class MatrixError(ValueError):
    """A matrix that must be a valid correlation / PD matrix is not."""


class IdentifiabilityError(ValueError):
    """The model cannot be identified from the supplied data."""


class EvaluationError(ArithmeticError):
    """A likelihood quantity could not be evaluated (zero probability)."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped without meeting its tolerances.

    ``last_iterate`` holds the final parameter vector and ``history`` the
    per-iteration record, so callers can inspect what went wrong.
    """

    def __init__(self, message, last_iterate=None, history=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.history = history or []


class ClampWarning(RuntimeWarning):
    """A correlation or probability was clamped to keep evaluation finite."""
