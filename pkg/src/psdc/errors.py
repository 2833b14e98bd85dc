"""Exception hierarchy shared by every module of the package."""


class PsdcError(Exception):
    """Base class for all package errors."""


class InvalidInputError(PsdcError, ValueError):
    """Non-finite or otherwise malformed numeric input."""


class ConfigurationError(PsdcError, ValueError):
    """Inconsistent parameters, dimensions or configuration documents."""


class DomainError(PsdcError, ValueError):
    """A function was queried outside of its open domain."""


class ConvergenceError(PsdcError, RuntimeError):
    """An iterative solver hit its iteration cap before its stopping rule.

    The last iterate and the number of iterations performed are kept so the
    caller can decide whether to accept the point anyway.
    """

    def __init__(self, message, last_iterate=None, iterations=0):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.iterations = iterations


class DivergenceError(PsdcError, RuntimeError):
    """Iterates of a subproblem solver blew up (unbounded subproblem)."""


class NumericalError(PsdcError, RuntimeError):
    """Step-size underflow and similar floating point breakdowns."""


class InvariantViolation(PsdcError, RuntimeError):
    """A runtime invariant (e.g. monotone descent of the DC iterates) failed."""


class DesignFailure(PsdcError, RuntimeError):
    """No certified steering matrix could be constructed."""


class InternalError(PsdcError, RuntimeError):
    """A numerical construction produced an object violating its contract."""
