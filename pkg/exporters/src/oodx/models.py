"""Model/tokenizer loading and batched execution with OOM back-off."""

from __future__ import annotations

from typing import Callable, Sequence, TypeVar

import torch

from .jobs import ExportError

T = TypeVar("T")
R = TypeVar("R")


def load_encoder(model_id: str, device: str):
    """Load a hidden-state encoder and its tokenizer for pooling."""
    from transformers import AutoModel, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(model_id)
        model = AutoModel.from_pretrained(model_id)
    except Exception as exc:  # transformers raises many concrete types here
        raise ExportError(f"cannot load encoder {model_id!r}: {exc}") from exc
    model.to(device)
    model.eval()
    return model, tokenizer


def load_causal_lm(model_id: str, device: str):
    """Load a next-token language model and its tokenizer."""
    from transformers import AutoModelForCausalLM, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(model_id)
        model = AutoModelForCausalLM.from_pretrained(model_id)
    except Exception as exc:
        raise ExportError(f"cannot load causal LM {model_id!r}: {exc}") from exc
    model.to(device)
    model.eval()
    return model, tokenizer


def _is_oom(exc: BaseException) -> bool:
    return isinstance(exc, MemoryError) or "out of memory" in str(exc).lower()


def run_batched(
    items: Sequence[T],
    batch_size: int,
    fn: Callable[[Sequence[T]], list[R]],
) -> list[R]:
    """Apply ``fn`` to chunks of ``items``; on an out-of-memory failure,
    halve the batch size and retry the same chunk, failing only once a
    single-item batch still cannot run."""
    out: list[R] = []
    size = max(1, batch_size)
    i = 0
    while i < len(items):
        chunk = items[i : i + size]
        try:
            results = fn(chunk)
        except (RuntimeError, MemoryError) as exc:
            if _is_oom(exc) and size > 1:
                size = max(1, size // 2)
                continue
            if _is_oom(exc):
                raise ExportError(
                    "out of memory even at batch size 1; use a smaller model or device"
                ) from exc
            raise
        if len(results) != len(chunk):
            raise ExportError(
                f"batch of {len(chunk)} produced {len(results)} results"
            )
        out.extend(results)
        i += len(chunk)
    return out


def pad_batch(
    token_rows: Sequence[Sequence[int]], pad_id: int, device: str
) -> tuple[torch.Tensor, torch.Tensor]:
    """Right-pad integer token rows into ``(input_ids, attention_mask)``."""
    width = max(len(row) for row in token_rows)
    ids = torch.full((len(token_rows), width), pad_id, dtype=torch.long)
    mask = torch.zeros((len(token_rows), width), dtype=torch.long)
    for r, row in enumerate(token_rows):
        ids[r, : len(row)] = torch.tensor(list(row), dtype=torch.long)
        mask[r, : len(row)] = 1
    return ids.to(device), mask.to(device)
