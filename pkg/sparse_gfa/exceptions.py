"""Custom exceptions for sparse-gfa."""

from typing import Optional


class GFAError(Exception):
    """Base exception for all sparse-gfa errors."""

    pass


class ConfigurationError(GFAError):
    """Raised when there's an issue with configuration."""

    pass


class DataError(GFAError):
    """Base class for problems with user-supplied data or files."""

    pass


class InvalidInputError(DataError):
    """Raised when inputs violate shape or value requirements."""

    pass


class ParseError(DataError):
    """Raised when an input file cannot be parsed."""

    def __init__(
        self, message: str, path: Optional[str] = None, line: Optional[int] = None
    ):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(f"{where}{message}")


class IntegrityError(DataError):
    """Raised when a model directory or manifest fails its integrity checks."""

    pass


class NoResultError(DataError):
    """Raised when an operation has nothing to compute on."""

    pass


class NumericalError(GFAError):
    """Raised when a computation produces non-finite or degenerate values."""

    pass


class FileError(GFAError):
    """Raised when there's an issue with file operations."""

    pass
