"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class RosenCITError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class UsageError(RosenCITError, ValueError):
    """Invalid arguments or option combinations."""

    exit_code = 2


class DataError(RosenCITError, ValueError):
    """Input data cannot be used for the requested computation."""

    exit_code = 3


class ConstantColumnError(DataError):
    """A conditioning column has zero standard deviation."""


class IsolatedPointError(DataError):
    """All kernel weights vanished at an evaluation point."""


class KindMismatchError(DataError):
    """Continuous and discrete columns were mixed where that is unsupported."""


class DimensionError(DataError):
    """Array shapes do not agree."""


class InsufficientSampleError(DataError):
    """Too few rows for a meaningful test."""


class BudgetError(RosenCITError, RuntimeError):
    """Requested Monte-Carlo work exceeds the configured ceiling."""

    exit_code = 4


class OracleError(RosenCITError):
    """A conditional independence test failed inside structure learning."""

    exit_code = 3
