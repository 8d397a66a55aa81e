"""Translation model backend: /translate server plus LoRA fine-tuning."""

from .errors import BackendError, BadTrainingFile, GenerationError, OutOfMemory
from .settings import BackendSettings, Precision

__version__ = "0.1.0"

__all__ = [
    "BackendError",
    "BackendSettings",
    "BadTrainingFile",
    "GenerationError",
    "OutOfMemory",
    "Precision",
    "__version__",
]
