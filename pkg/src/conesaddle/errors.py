"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class ConeSaddleError(Exception):
    """Base class for library errors."""


class DimensionError(ConeSaddleError, ValueError):
    """Input has the wrong number of components."""


class DomainError(ConeSaddleError, ValueError):
    """Input lies outside the admissible domain or grid."""


class ValidationError(ConeSaddleError, ValueError):
    """A structural check on user-supplied data failed."""


class PreconditionError(ConeSaddleError, ValueError):
    """An operation was called with arguments violating its contract."""


class ConvergenceError(ConeSaddleError, RuntimeError):
    """An iterative method did not reach its tolerance.

    ``history`` holds the residual or energy sequence recorded so far.
    """

    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = [] if history is None else list(history)
