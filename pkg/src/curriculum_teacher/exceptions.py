"""Exception hierarchy shared across the package."""


class CurriculumTeacherError(Exception):
    """Base class for all package errors."""


class DimensionError(CurriculumTeacherError, ValueError):
    """Array shapes do not agree."""


class NumericError(CurriculumTeacherError, ArithmeticError):
    """A non-finite value appeared or a factorization failed."""


class ConfigurationError(CurriculumTeacherError, ValueError):
    """Invalid configuration or precondition violated."""


class BoundsError(CurriculumTeacherError, IndexError):
    """Index outside the valid range."""


class InsufficientDataError(CurriculumTeacherError):
    """Not enough stored transitions to draw a sample."""


class TransferError(CurriculumTeacherError):
    """A saved teacher does not fit the target problem."""

    def __init__(self, message, expected=None, actual=None):
        super().__init__(message)
        self.expected = expected
        self.actual = actual
