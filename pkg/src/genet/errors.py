"""Exception hierarchy shared across the package."""


class GENetError(Exception):
    """Base class for all package errors."""


class DimensionError(GENetError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(GENetError, ValueError):
    """A precondition of an operation was violated."""


class ValidationError(GENetError, ValueError):
    """Parameter values fall outside their legal domain."""


class AlignmentError(GENetError, ValueError):
    """Landmark sets are degenerate and admit no affine fit."""


class DegenerateSubspaceError(GENetError, ValueError):
    """The identity sample set has no spread to build a subspace from."""


class UndefinedMetricError(GENetError, ValueError):
    """A metric is undefined for the given inputs (e.g. zero variance)."""


class ConfigError(GENetError):
    """Configuration or artifact dimensions disagree."""


class DataError(GENetError):
    """Input data is missing or malformed."""


class NumericError(GENetError, FloatingPointError):
    """A non-finite value appeared during optimization."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
