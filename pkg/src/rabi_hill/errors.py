"""Exception types raised by the solver, oracle and atlas."""


class RabiHillError(Exception):
    """Base class for all package errors."""


class NotConvergedError(RabiHillError, RuntimeError):
    """An iterative method hit its iteration cap."""


class NegativeIntegerGuardError(RabiHillError, ValueError):
    """x lies inside the guard band around a negative integer."""


class ZeroCoefficientError(RabiHillError, ZeroDivisionError):
    """Backward recursion would divide by a vanishing c_k (integer x in range)."""


class ResidualTooLargeError(RabiHillError, ArithmeticError):
    """A coefficient vector fails the recurrence rows it is supposed to satisfy."""


class NullSpaceNotFoundError(RabiHillError, ArithmeticError):
    """The finite block W_0^{n-1} is not singular at the requested point."""
