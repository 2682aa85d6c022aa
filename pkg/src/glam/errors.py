"""Error taxonomy shared across the package.

Every failure the library raises deliberately is one of these, so callers
(and the CLI) can tell user mistakes apart from internal state problems.
"""


class GlamError(Exception):
    """Base class for all errors raised on purpose by this package."""


class ShapeError(GlamError):
    """Operands have incompatible or unexpected shapes."""


class ConfigError(GlamError):
    """A configuration value is out of its legal range or inconsistent."""


class StateError(GlamError):
    """An object was used in an order its lifecycle does not allow."""


class ValidationError(GlamError):
    """Input data violates a documented contract."""


class FormatError(GlamError):
    """A file or byte stream is not in the expected format."""


class ParseError(GlamError):
    """A text input could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TooShortError(GlamError):
    """An audio clip is shorter than one analysis window."""


class DivergenceError(GlamError):
    """Training produced a non-finite loss."""


class GlamIOError(GlamError):
    """A file could not be read or written."""
