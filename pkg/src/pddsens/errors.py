"""Exception types shared across the package."""


class PddError(Exception):
    """Base class for all errors raised by pddsens."""


class ParameterError(PddError, ValueError):
    """Invalid distribution, truncation or solver parameters."""


class TruncationError(ParameterError):
    pass


class ShapeError(PddError, ValueError):
    pass


class DegreeError(ParameterError):
    pass


class NumericError(PddError, ArithmeticError):
    """Non-finite values or a numerically unusable intermediate."""


class ConditioningError(NumericError):
    def __init__(self, message, condition_number=float("nan")):
        super().__init__(f"{message} (condition number {condition_number:.3e})")
        self.condition_number = condition_number


class IngestionError(PddError):
    """A data file could not be read into a training set."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class FormatError(PddError):
    """A persisted model or report file is corrupt."""


class AssetError(PddError):
    pass
