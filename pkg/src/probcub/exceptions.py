"""Exception hierarchy shared across probcub."""


class ProbcubError(Exception):
    """Base class for all probcub errors."""


class ArgumentError(ProbcubError, ValueError):
    """An argument violates a documented precondition."""


class UnsupportedError(ProbcubError):
    """The requested operation is not available for this input."""


class UnsupportedPairError(UnsupportedError):
    """No closed-form kernel mean is implemented for a (kernel, measure) pair."""

    def __init__(self, kernel, measure, note=""):
        self.kernel = kernel
        self.measure = measure
        msg = f"no closed-form kernel mean for ({kernel}, {measure})"
        if note:
            msg += f": {note}"
        super().__init__(msg)


class ConditioningError(ProbcubError, ArithmeticError):
    """A linear system could not be solved reliably.

    Attributes
    ----------
    condition : float
        Estimated 2-norm condition number of the offending matrix
        (``inf`` when it could not be estimated).
    """

    def __init__(self, msg, condition=float("inf")):
        self.condition = condition
        super().__init__(f"{msg} (condition estimate {condition:.3e})")


class DegenerateChainError(ProbcubError):
    """A Markov chain accepted no proposals."""


class CapacityError(ProbcubError):
    """A generator was asked for more dimensions or precision than it holds."""


class DesignFileError(ProbcubError):
    """A point-set file could not be parsed or failed validation."""

    def __init__(self, msg, line=None):
        self.line = line
        if line is not None:
            msg = f"line {line}: {msg}"
        super().__init__(msg)


class ConfigError(ProbcubError):
    """An experiment configuration is malformed."""
