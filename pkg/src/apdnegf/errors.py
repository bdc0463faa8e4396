"""Exception hierarchy shared by all modules."""


class NegfError(Exception):
    """Base class for package errors."""


class ValidationError(NegfError, ValueError):
    """Inputs violate a documented precondition."""


class PartitionError(ValidationError):
    """Model couplings reach beyond the nearest principal layer."""


class NumericalError(NegfError, ArithmeticError):
    """A linear-algebra step failed or produced non-finite values."""


class ConvergenceError(NumericalError):
    """An iterative solver did not reach its tolerance."""

    def __init__(self, message, *, history=None, state=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []
        self.state = state


class DivergenceError(ConvergenceError):
    """The SCBA residual grew instead of shrinking."""


class FitError(NumericalError):
    """Band fitting diverged or produced a non-finite objective."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []
