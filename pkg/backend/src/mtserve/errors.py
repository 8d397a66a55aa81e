"""Errors raised by the backend."""


class BackendError(Exception):
    """Base class for backend failures."""


class BadTrainingFile(BackendError):
    """Training file is missing, unparseable, or violates the record schema."""


class GenerationError(BackendError):
    """Decoding failed inside the model."""


class OutOfMemory(BackendError):
    """Device ran out of memory during training or decoding."""
