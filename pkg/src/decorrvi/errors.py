"""Exception hierarchy shared by the package and mapped to CLI exit codes."""


class DecorrError(Exception):
    """Base class for package errors."""


class DataError(DecorrError):
    """Malformed or unusable input data (CLI exit code 2)."""


class InsufficientDataError(DataError):
    """Too few rows for the requested computation."""


class DegenerateError(DataError):
    """A constant coordinate or otherwise degenerate input."""


class NumericalError(DecorrError):
    """A linear system stayed singular after regularisation (CLI exit code 3)."""


class UnsupportedParameterError(DecorrError):
    """Parameter not defined for the given data shape or example."""
