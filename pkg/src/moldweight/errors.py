"""Exception hierarchy.

Everything raised deliberately by the library derives from MoldWeightError.
UsageError marks bad arguments (CLI exit code 1); everything else is a data or
numeric failure (CLI exit code 2).
"""


class MoldWeightError(Exception):
    pass


class UsageError(MoldWeightError, ValueError):
    pass


class DataError(MoldWeightError, ValueError):
    pass


# tsa
class ZeroVarianceError(DataError):
    pass


class LagTooLargeError(UsageError):
    pass


class NonFiniteInputError(DataError):
    pass


class InvalidConfidenceError(UsageError):
    pass


class UnknownChannelError(UsageError):
    pass


# nn
class ShapeMismatchError(DataError):
    pass


class EmptyWindowError(DataError):
    pass


class LengthMismatchError(DataError):
    pass


class IncompleteTapeError(MoldWeightError, RuntimeError):
    pass


# model
class SchemaVariantMismatchError(DataError):
    pass


class WindowLengthMismatchError(DataError):
    pass


class SchemaMismatchError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class OutOfOrderRecordError(DataError):
    pass


class VersionMismatchError(DataError):
    pass


class SchemaFingerprintMismatchError(SchemaMismatchError):
    pass


class CorruptFileError(DataError):
    pass


# classic
class NoConvergenceError(MoldWeightError, RuntimeError):
    pass


class EmptyGridError(UsageError):
    pass


# data
class InvalidConfigError(UsageError):
    pass


class HeaderMismatchError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class NonMonotonicMoldIndexError(DataError):
    pass


# eval
class ZeroVarianceDifferencesError(DataError):
    pass


class InvalidDfError(UsageError):
    pass
