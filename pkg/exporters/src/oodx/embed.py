"""Sentence embeddings: mean of the last layer's token states."""

from __future__ import annotations

import numpy as np
import torch

from .formats import read_dataset, write_embeddings, write_warnings
from .jobs import ExportError, ExportJob
from .models import load_encoder, pad_batch, run_batched


def _fallback_token(tokenizer) -> int:
    for tid in (tokenizer.pad_token_id, tokenizer.unk_token_id):
        if tid is not None:
            return int(tid)
    return 0


def _tokenize(tokenizer, texts: list[str]) -> tuple[list[list[int]], list[int]]:
    """Token rows per text plus the indices whose text yielded no tokens
    (those get a single pad-equivalent token so they still pool to a row)."""
    encoded = tokenizer(list(texts))["input_ids"]
    empty = [i for i, row in enumerate(encoded) if not row]
    if empty:
        fallback = _fallback_token(tokenizer)
        for i in empty:
            encoded[i] = [fallback]
    return encoded, empty


def _pool_batch(model, token_rows, pad_id: int, device: str) -> list[np.ndarray]:
    ids, mask = pad_batch(token_rows, pad_id, device)
    with torch.no_grad():
        hidden = model(input_ids=ids, attention_mask=mask).last_hidden_state
    weights = mask.unsqueeze(-1).to(hidden.dtype)
    pooled = (hidden * weights).sum(dim=1) / weights.sum(dim=1)
    return [row for row in pooled.cpu().numpy().astype(np.float32)]


def embed_texts(model, tokenizer, texts, batch_size: int = 32, device: str = "cpu"):
    """Mean-pooled last-layer vectors, one per text, as ``(n, d) float32``.

    Returns ``(vectors, empty_indices)`` where the second element lists
    positions whose text produced no tokens.
    """
    token_rows, empty = _tokenize(tokenizer, list(texts))
    pad_id = _fallback_token(tokenizer)
    rows = run_batched(
        token_rows,
        batch_size,
        lambda chunk: _pool_batch(model, chunk, pad_id, device),
    )
    return np.stack(rows), empty


def export_embeddings(job: ExportJob) -> str:
    """Embed every dataset record and write the binary embedding file.

    Records whose text yields no tokens are pooled from a single
    pad-equivalent token and listed in a ``<out>.warnings.json`` sidecar.
    Returns the output path.
    """
    pairs = read_dataset(job.dataset_path)
    model, tokenizer = load_encoder(job.model, job.device)
    texts = [text for _, text in pairs]
    vectors, empty = embed_texts(
        model, tokenizer, texts, batch_size=job.batch_size, device=job.device
    )
    if not np.isfinite(vectors).all():
        raise ExportError("model produced non-finite embedding values")
    write_embeddings(job.out_path, [rec_id for rec_id, _ in pairs], vectors)
    if empty:
        write_warnings(
            str(job.out_path) + ".warnings.json",
            [pairs[i][0] for i in empty],
        )
    return str(job.out_path)
