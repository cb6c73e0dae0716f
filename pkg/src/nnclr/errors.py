"""Exception types shared across the package."""


class NnclrError(Exception):
    """Base class for all package errors."""


# numerics
class RowNormUnderflow(NnclrError):
    """A row norm fell at or below the configured floor (collapsed embedding)."""


# layers / model
class ShapeMismatch(NnclrError):
    pass


class BatchTooSmall(NnclrError):
    """Batch-norm training mode needs at least two samples."""


# support set
class BatchLargerThanQueue(NnclrError):
    pass


class KOutOfRange(NnclrError):
    pass


class LabelsUnavailable(NnclrError):
    pass


# losses
class ZeroVector(NnclrError):
    pass


# optim
class NonFiniteGradient(NnclrError):
    pass


class StepOutOfRange(NnclrError):
    pass


# data
class SeparationUnsatisfiable(NnclrError):
    pass


class FileMissing(NnclrError):
    pass


class RecordSizeMismatch(NnclrError):
    pass


class LabelOutOfRange(NnclrError):
    pass


# augment
class ImageTooSmall(NnclrError):
    pass


# eval
class ClassMissingFromTrain(NnclrError):
    pass


class CheckpointMissing(NnclrError):
    pass


# cli / config
class ConfigError(NnclrError):
    """Invalid or missing configuration key; message names the key."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class CheckpointFormatError(NnclrError):
    """Bad magic bytes or unsupported checkpoint version."""
