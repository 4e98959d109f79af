"""Exception types shared across the package."""

from __future__ import annotations


class KDError(Exception):
    """Base class for every error raised by this package."""


class EmptyReference(KDError, ValueError):
    """Reference normalizes to nothing while the hypothesis does not."""


class EmptyInput(KDError, ValueError):
    pass


class LengthMismatch(KDError, ValueError):
    pass


class TokenOutOfRange(KDError, ValueError):
    pass


class SequenceTooLong(KDError, ValueError):
    pass


class IncompatibleConfig(KDError, ValueError):
    pass


class StudentLargerThanTeacher(KDError, ValueError):
    pass


class NonFiniteLoss(KDError, FloatingPointError):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class CorruptCheckpoint(KDError, ValueError):
    pass


class VersionMismatch(KDError, ValueError):
    pass


class SchemaViolation(KDError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DuplicateId(KDError, ValueError):
    pass


class SizeExceedsCorpus(KDError, ValueError):
    pass


class BudgetExhausted(KDError, RuntimeError):
    """Raised when teacher training stops before reaching its target dev WER."""


class StageError(KDError, RuntimeError):
    def __init__(self, stage: str, cause: BaseException | str):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
