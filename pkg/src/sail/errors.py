"""Exception hierarchy shared by the library and the command line driver."""


class SailError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 4


class ConfigError(SailError, ValueError):
    """Invalid configuration: unknown names, bad keys, out-of-range values."""

    exit_code = 2


class InputError(SailError):
    """Missing, unreadable or inconsistent input files."""

    exit_code = 3


class ParseError(InputError, ValueError):
    """A file exists but its contents cannot be decoded."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class ValidationError(InputError, ValueError):
    """Decoded data disagrees with its manifest or environment."""


class UsageError(SailError, RuntimeError):
    """An object was used out of order, e.g. stepping a finished episode."""


class ShapeError(SailError, ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class QualityError(SailError, RuntimeError):
    """A scripted controller could not produce episodes above the threshold."""
