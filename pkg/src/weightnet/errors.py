"""Exception hierarchy shared by all weightnet modules."""


class WeightnetError(Exception):
    """Base class for every error raised by this package."""


class InvalidConfigError(WeightnetError, ValueError):
    pass


class CapacityError(WeightnetError):
    """Requested run would exceed the documented memory budget."""


class DegenerateModelError(WeightnetError, ValueError):
    pass


class DomainError(WeightnetError, ValueError):
    """Inadmissible distribution parameters or out-of-support input."""


class NumericError(WeightnetError, ArithmeticError):
    pass


class DegenerateDataError(WeightnetError, ValueError):
    pass


class InsufficientTailError(WeightnetError, ValueError):
    pass


class DataError(WeightnetError, ValueError):
    pass


class TailSaturationError(DataError):
    """Model CDF is exactly 0 or 1 at a sample point."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class DegenerateMatrixError(WeightnetError, ValueError):
    pass


class SparseBinError(WeightnetError, ValueError):
    pass


class NoVariationError(WeightnetError, ValueError):
    pass


class InvalidCellError(WeightnetError, ValueError):
    pass


class EmptyInputError(WeightnetError, ValueError):
    pass


class FormatError(WeightnetError, ValueError):
    """Malformed file header or layout."""
