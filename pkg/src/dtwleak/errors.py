"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
InvariantError (and anything unexpected) -> 3.
"""


class DtwLeakError(Exception):
    """Base class for all package errors."""


class ConfigError(DtwLeakError):
    """Invalid configuration or usage (bad flag value, inconsistent options)."""


class DataError(DtwLeakError):
    """Problem with input data."""


class ParseError(DataError):
    """A data file contains a token that cannot be parsed."""


class ShapeError(DataError):
    """Dimensions disagree (ragged rows, mismatched feature widths)."""


class LabelError(DataError):
    """A class label is outside the known mapping."""


class InsufficientDataError(DataError):
    """Not enough samples to perform the requested operation."""


class InvariantError(DtwLeakError):
    """An internal consistency check failed."""


class StageError(DtwLeakError):
    """A pipeline stage failed; carries the stage name and the original error."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
