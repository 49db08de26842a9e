"""Standalone readers/writers for the toolkit's file formats.

These mirror the published formats exactly — a dataset is JSONL with
``id``/``text`` fields, embeddings are the ``OODEMB01`` binary layout,
token log-probs are JSONL with an optional ``{"_meta": ...}`` header
line — so files written here load in the toolkit with no shared code.
"""

from __future__ import annotations

import json
import struct
from typing import Iterable, Sequence

import numpy as np

from .jobs import ExportError

EMBEDDING_MAGIC = b"OODEMB01"


def read_dataset(path) -> list[tuple[str, str]]:
    """Return ``(id, text)`` pairs in file order."""
    pairs: list[tuple[str, str]] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ExportError(f"{path}:{lineno}: malformed line: {exc}") from exc
            try:
                rec_id = str(obj["id"])
                text = str(obj["text"])
            except KeyError as exc:
                raise ExportError(f"{path}:{lineno}: missing key {exc}") from exc
            if rec_id in seen:
                raise ExportError(f"{path}:{lineno}: duplicate id {rec_id!r}")
            seen.add(rec_id)
            pairs.append((rec_id, text))
    if not pairs:
        raise ExportError(f"{path}: dataset is empty")
    return pairs


def write_embeddings(path, ids: Sequence[str], vectors: np.ndarray) -> None:
    """Write the ``OODEMB01`` binary layout: magic, u32 counts, then one
    length-prefixed utf-8 id followed by little-endian float32 row each."""
    vectors = np.asarray(vectors, dtype=np.float32)
    if vectors.ndim != 2 or len(ids) != vectors.shape[0]:
        raise ExportError(
            f"need one vector per id, got {len(ids)} ids and shape {vectors.shape}"
        )
    if not np.isfinite(vectors).all():
        raise ExportError("embeddings contain non-finite values")
    n, d = vectors.shape
    with open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<II", n, d))
        for rec_id, row in zip(ids, vectors):
            id_bytes = rec_id.encode("utf-8")
            if len(id_bytes) > 0xFFFF:
                raise ExportError(f"id too long to serialize: {rec_id[:32]!r}...")
            fh.write(struct.pack("<H", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(np.asarray(row, dtype="<f4").tobytes())


def write_logprobs(
    path,
    rows: Iterable[tuple[str, Sequence[float]]],
    meta: dict,
    tokens: dict[str, Sequence[str]] | None = None,
) -> None:
    """Write the token log-prob JSONL: a ``_meta`` header line recording
    the scoring convention, then ``{"id", "logprobs"[, "tokens"]}`` rows."""
    tokens = tokens or {}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"_meta": meta}) + "\n")
        for rec_id, values in rows:
            obj: dict = {"id": rec_id, "logprobs": [float(v) for v in values]}
            if rec_id in tokens:
                obj["tokens"] = [str(t) for t in tokens[rec_id]]
            fh.write(json.dumps(obj) + "\n")


def write_warnings(path, empty_text_ids: Sequence[str]) -> None:
    """Sidecar list of records whose text produced no tokens."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"empty_text_ids": list(empty_text_ids)}, fh, indent=2)
        fh.write("\n")
