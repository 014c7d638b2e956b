"""Exception taxonomy shared across the package."""


class PlcError(Exception):
    """Base class for all errors raised by plcnet."""


class InvalidArgumentError(PlcError, ValueError):
    """An argument violates an operation's preconditions."""


class InvalidStateError(PlcError, RuntimeError):
    """Operation is not valid in the current object state."""


class FormatError(PlcError, ValueError):
    """A file or byte stream is malformed."""


class UnsupportedFormatError(FormatError):
    """A file parses but uses an encoding or layout we do not handle."""


class NumericFailureError(PlcError, ArithmeticError):
    """A computation produced non-finite values."""


class TrainingDivergedError(NumericFailureError):
    """Training loss became non-finite.

    Carries the last weights that produced a finite loss plus the history
    accumulated so far, so callers can salvage the run.
    """

    def __init__(self, message, weights=None, history=None):
        super().__init__(message)
        self.weights = weights
        self.history = history if history is not None else []
