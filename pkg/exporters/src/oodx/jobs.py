"""Export job description and error type."""

from __future__ import annotations

from dataclasses import dataclass

POOLING_MODES = ("mean-last-layer",)


class ExportError(Exception):
    """A model could not be loaded or an export could not be produced."""


@dataclass(frozen=True)
class ExportJob:
    """Everything one export run needs.

    ``model`` is a local directory (or any identifier transformers can
    resolve without network access); ``pooling`` only supports the
    mean of the last layer's token states.
    """

    model: str
    dataset_path: str
    out_path: str
    pooling: str = "mean-last-layer"
    batch_size: int = 32
    device: str = "cpu"

    def __post_init__(self) -> None:
        if self.pooling not in POOLING_MODES:
            raise ExportError(
                f"unsupported pooling {self.pooling!r}; choose from {POOLING_MODES}"
            )
        if self.batch_size < 1:
            raise ExportError(f"batch_size must be >= 1, got {self.batch_size}")
