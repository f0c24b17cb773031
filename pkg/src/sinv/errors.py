"""Exception hierarchy shared by every pipeline stage.

Each class carries a short ``category`` string; the CLI prints it on the
single error line and maps it to an exit code.
"""


class SinvError(Exception):
    category = "error"


class InvalidParameterError(SinvError, ValueError):
    category = "invalid-parameter"


class EmptyInputError(SinvError, ValueError):
    category = "empty-input"


class InvalidInputError(SinvError, ValueError):
    category = "invalid-input"


class ShapeError(SinvError, ValueError):
    category = "shape"


class AlignmentError(SinvError, ValueError):
    category = "alignment"


class FormatError(SinvError, ValueError):
    """Malformed binary file. ``offset`` is the byte position of the fault."""

    category = "format"

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(SinvError, ValueError):
    category = "config"


class CompatibilityError(ConfigError):
    category = "compatibility"


class SplitError(ConfigError):
    category = "speaker-split"


class NumericError(SinvError, ArithmeticError):
    category = "numeric"
