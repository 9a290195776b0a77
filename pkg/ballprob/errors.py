class BallProbError(Exception):
    """Base class of all errors raised by ballprob."""


class DomainError(BallProbError, ValueError):
    """An input lies outside the domain of the requested operation."""


class ConditionError(BallProbError, ValueError):
    """A hypothesis of a bound does not hold for the given operands.

    Parameters
    ----------
        message : str
            human readable description of the failed hypothesis
        which : str
            name of the failing operand, e.g. ``"sx"`` or ``"sy"``
    """

    def __init__(self, message: str, which: str = ""):
        super().__init__(message)
        self.which = which


class NumericalError(BallProbError, RuntimeError):
    """A numerical procedure did not reach its tolerance.

    Parameters
    ----------
        message : str
            description of the failure
        err_est : float
            achieved error estimate
    """

    def __init__(self, message: str, err_est: float = float("nan")):
        super().__init__(message)
        self.err_est = err_est
