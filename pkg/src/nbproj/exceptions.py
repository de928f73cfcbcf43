"""Exception hierarchy shared across the toolkit."""


class NBProjError(Exception):
    """Base class for every error raised by nbproj."""


class DataError(NBProjError):
    """Raised for malformed or unusable input data."""


class NonFiniteEntry(DataError):
    pass


class EmptyClass(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class EmptyTable(DataError):
    pass


class NoClassesRemain(DataError):
    pass


class TargetTooLarge(DataError):
    pass


class ClassTooSmall(DataError):
    pass


class ZeroStandardDeviation(DataError):
    pass


class DegenerateSample(DataError):
    pass


class EmptySample(DataError):
    pass


class NumericalError(NBProjError):
    """Raised when a fit or numerical routine cannot produce a usable result."""


class SingularCovariance(NumericalError):
    pass


class NonFiniteObjective(NumericalError):
    pass


class LineSearchFailure(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class DegenerateRow(NumericalError):
    pass


class DimensionTooLow(NBProjError):
    pass
