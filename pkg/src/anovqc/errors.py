"""Exception types shared across the package."""


class AnoError(Exception):
    """Base class for all package errors."""


class ConfigError(AnoError, ValueError):
    """A configuration value is invalid or inconsistent."""


class InputError(AnoError, ValueError):
    """An argument has the wrong shape, range or value."""


class FormatError(AnoError, ValueError):
    """A data file does not follow its expected layout."""


class ParseError(FormatError):
    """A data file row could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
