"""Exception hierarchy.

Every error raised by the package derives from :class:`MfmWishartError`.
The three intermediate classes map onto CLI exit codes.
"""


class MfmWishartError(Exception):
    exit_code = 1


class ConfigError(MfmWishartError, ValueError):
    exit_code = 2


class DataError(MfmWishartError, ValueError):
    exit_code = 3


class NumericError(MfmWishartError, ArithmeticError):
    exit_code = 4


# -- matrices / data ---------------------------------------------------------

class NotPositiveDefinite(DataError):
    def __init__(self, pivot, message=None):
        self.pivot = pivot
        super().__init__(message or f"matrix is not positive definite (pivot {pivot})")


class NotSymmetric(DataError):
    def __init__(self, asymmetry):
        self.asymmetry = asymmetry
        super().__init__(f"matrix is not symmetric (max relative asymmetry {asymmetry:.3g})")


class DimMismatch(DataError):
    pass


class LengthMismatch(DataError):
    pass


class ZeroDiagonal(DataError):
    pass


class HeterogeneousDims(DataError):
    pass


class NonSpdObservation(DataError):
    def __init__(self, index, reason=""):
        self.index = index
        msg = f"observation {index} is not symmetric positive definite"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class RaggedSeries(DataError):
    pass


class NonNumericCell(DataError):
    def __init__(self, row, col, value, source=""):
        self.row, self.col = row, col
        where = f"{source}: " if source else ""
        super().__init__(f"{where}non-numeric cell {value!r} at row {row}, column {col}")


class InsufficientLength(DataError):
    pass


class TooShortSeries(DataError):
    pass


class EmptyTrace(DataError):
    pass


class TooShort(DataError):
    pass


class DegenerateMargins(DataError):
    pass


class BadK(DataError):
    pass


class IndexOutOfRange(DataError):
    pass


class MissingScaleConfig(ConfigError):
    pass


# -- parameters / numerics -----------------------------------------------------

class InvalidDof(MfmWishartError, ValueError):
    exit_code = 3


class DomainError(MfmWishartError, ValueError):
    exit_code = 4


class NonConvergence(NumericError):
    pass


class TableMissing(NumericError):
    pass
