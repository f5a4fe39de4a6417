"""Exception types shared across the toolkit.

The CLI maps these onto process exit codes: ConfigError (and contract or
shape violations, which indicate caller bugs) exit 2, DataError exits 3,
NumericsError exits 4.
"""


class GinopicError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(GinopicError):
    """Invalid configuration value or option combination."""


class DataError(GinopicError):
    """Unreadable, truncated, or malformed input/output file."""

    def __init__(self, message: str, path=None):
        if path is not None:
            message = f"{message} [{path}]"
        super().__init__(message)
        self.path = path


class ShapeError(GinopicError):
    """Operands with incompatible shapes; the message names both."""


class ContractError(GinopicError):
    """An API precondition was violated by the caller."""


class NumericsError(GinopicError):
    """NaN or Inf produced during numeric evaluation."""
