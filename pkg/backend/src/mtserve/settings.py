"""Runtime settings for the serving and fine-tune entrypoints."""

from __future__ import annotations

import enum
from dataclasses import dataclass


class Precision(enum.Enum):
    HALF = "half"
    FULL = "full"


@dataclass(frozen=True)
class BackendSettings:
    """How the backend loads (or skips loading) a model.

    echo_mode short-circuits everything model related: no weights are
    constructed or read from disk, the server answers from the request alone.
    """

    model_id: str = "proxy-lm"
    adapter_dir: str | None = None
    precision: Precision = Precision.HALF
    device: str = "cpu"
    echo_mode: bool = False

    def __post_init__(self) -> None:
        if not isinstance(self.model_id, str) or not self.model_id:
            raise ValueError("model_id must be a non-empty string")
        if self.adapter_dir is not None and not isinstance(self.adapter_dir, str):
            raise ValueError("adapter_dir must be a string or None")
        if not isinstance(self.precision, Precision):
            raise ValueError("precision must be a Precision")
        if not isinstance(self.device, str) or not self.device:
            raise ValueError("device must be a non-empty string")
        if not isinstance(self.echo_mode, bool):
            raise ValueError("echo_mode must be a bool")
