"""Exception hierarchy shared by every module."""


class BatchSchedError(Exception):
    """Base class."""


class DomainError(BatchSchedError, ValueError):
    """A parameter lies outside its admissible range."""


class DimensionError(DomainError):
    """Vector length does not match the problem dimension."""


class RegimeError(DomainError):
    """Operation is undefined for the task regime of the given spec."""


class InfeasibleError(BatchSchedError):
    """No schedule satisfies the budget and batch-size constraints."""


class InstabilityError(BatchSchedError, ArithmeticError):
    """A numerical solver or SGD run diverged."""

    def __init__(self, message, step=None, run_index=None):
        super().__init__(message)
        self.step = step
        self.run_index = run_index
