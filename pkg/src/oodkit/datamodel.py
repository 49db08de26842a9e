"""Canonical in-memory types, file formats and model persistence.

File formats:

* Dataset: JSON lines, one object per line with keys ``id``, ``text``,
  ``label`` (nullable), ``split`` and optionally ``is_ood``.
* Embeddings: binary; magic ``OODEMB01``, uint32-LE row count ``n``,
  uint32-LE dimension ``d``, then ``n`` rows of [uint16-LE id byte length,
  UTF-8 id bytes, ``d`` float32-LE values].
* Token log-probs: JSON lines with keys ``id``, ``logprobs`` (natural log)
  and optionally ``tokens``. A first line whose object carries a ``_meta``
  key is treated as an in-band header (e.g. an exporter recording its
  token-position convention) and skipped.
* Scores: JSON lines with keys ``id``, ``ood_score`` (higher = more OOD)
  and optionally ``is_ood``; the same ``_meta`` header convention applies.
* Model bundle: a single versioned JSON document. Floats are serialized
  as shortest round-tripping decimal text, so save/load is bit-exact.
"""
from __future__ import annotations

import json
import math
import struct
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DataError

EMBEDDING_MAGIC = b"OODEMB01"
BUNDLE_FORMAT_VERSION = 1

VALID_SPLITS = ("train", "valid", "test")


@dataclass(frozen=True)
class Record:
    """One text item; ``label`` is the hidden class, used only for split
    construction and evaluation."""

    id: str
    text: str
    label: str | None = None
    split: str = "train"
    is_ood: bool | None = None

    def __post_init__(self) -> None:
        if self.split not in VALID_SPLITS:
            raise DataError(
                f"record {self.id!r}: unknown split tag {self.split!r} "
                f"(expected one of {VALID_SPLITS})"
            )


class Dataset:
    """Ordered collection of Records with unique ids."""

    def __init__(self, records: Iterable[Record]):
        self.records: list[Record] = list(records)
        seen: set[str] = set()
        for rec in self.records:
            if rec.id in seen:
                raise DataError(f"duplicate id {rec.id!r} in dataset")
            seen.add(rec.id)
        for rec in self.records:
            if rec.split == "train" and rec.is_ood:
                raise DataError(f"train record {rec.id!r} carries is_ood=true")
        self._by_id = {rec.id: rec for rec in self.records}

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[Record]:
        return iter(self.records)

    def __getitem__(self, rec_id: str) -> Record:
        return self._by_id[rec_id]

    def __contains__(self, rec_id: str) -> bool:
        return rec_id in self._by_id

    def ids(self) -> list[str]:
        return [rec.id for rec in self.records]

    def subset(self, split: str) -> "Dataset":
        return Dataset(rec for rec in self.records if rec.split == split)

    def labels(self, split: str | None = None) -> list[str]:
        """Distinct labels in first-appearance order, optionally per split."""
        out: list[str] = []
        seen: set[str] = set()
        for rec in self.records:
            if split is not None and rec.split != split:
                continue
            if rec.label is not None and rec.label not in seen:
                seen.add(rec.label)
                out.append(rec.label)
        return out


@dataclass(frozen=True)
class EmbeddingSet:
    """Aligned per-item base embeddings: ids paired with an (n, d) matrix."""

    ids: tuple[str, ...]
    vectors: np.ndarray

    def __post_init__(self) -> None:
        vec = np.asarray(self.vectors, dtype=np.float64)
        object.__setattr__(self, "vectors", vec)
        if vec.ndim != 2:
            raise DataError("embedding matrix must be 2-D")
        if len(self.ids) != vec.shape[0]:
            raise DataError(
                f"{len(self.ids)} ids but {vec.shape[0]} embedding rows"
            )
        if len(set(self.ids)) != len(self.ids):
            raise DataError("duplicate ids in embedding set")
        if vec.size and not np.isfinite(vec).all():
            bad = int(np.argwhere(~np.isfinite(vec).all(axis=1))[0][0])
            raise DataError(f"non-finite embedding value in row {self.ids[bad]!r}")

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return len(self.ids)

    def row(self, rec_id: str) -> np.ndarray:
        return self.vectors[self.ids.index(rec_id)]

    def select(self, wanted: Iterable[str]) -> "EmbeddingSet":
        """Rows for ``wanted`` ids, in the given order."""
        index = {rid: i for i, rid in enumerate(self.ids)}
        wanted = list(wanted)
        missing = [rid for rid in wanted if rid not in index]
        if missing:
            raise DataError(f"embeddings missing ids: {missing[:5]}")
        rows = np.array([index[rid] for rid in wanted], dtype=int)
        return EmbeddingSet(tuple(wanted), self.vectors[rows])


@dataclass(frozen=True)
class TokenLogProbSet:
    """Per-token natural-log probabilities per record id."""

    rows: tuple[tuple[str, tuple[float, ...]], ...]
    tokens: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for rec_id, lps in self.rows:
            if rec_id in seen:
                raise DataError(f"duplicate id {rec_id!r} in log-prob set")
            seen.add(rec_id)
            if len(lps) < 1:
                raise DataError(f"empty log-prob sequence for {rec_id!r}")
            for lp in lps:
                if not np.isfinite(lp) or lp > 0:
                    raise DataError(
                        f"log-probability {lp!r} for {rec_id!r} is not a "
                        "finite value <= 0"
                    )

    def ids(self) -> list[str]:
        return [rec_id for rec_id, _ in self.rows]

    def get(self, rec_id: str) -> tuple[float, ...]:
        for rid, lps in self.rows:
            if rid == rec_id:
                return lps
        raise KeyError(rec_id)

    def as_dict(self) -> dict[str, tuple[float, ...]]:
        return dict(self.rows)


@dataclass(frozen=True)
class AlignmentReport:
    """Result of comparing a dataset's id set with an auxiliary file's."""

    missing_in_aux: tuple[str, ...]
    extra_in_aux: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.missing_in_aux and not self.extra_in_aux

    def describe(self) -> str:
        if self.ok:
            return "aligned"
        parts = []
        if self.missing_in_aux:
            parts.append(f"missing in aux: {sorted(self.missing_in_aux)}")
        if self.extra_in_aux:
            parts.append(f"extra in aux: {sorted(self.extra_in_aux)}")
        return "; ".join(parts)


@dataclass
class ModelBundle:
    """Everything a serving process needs, as one versioned document.

    ``encoder_state`` and ``gmm`` are stored as plain dicts produced by the
    owning modules' ``to_dict``/``from_dict`` helpers, which keeps this
    module free of circular imports.
    """

    format_version: int = BUNDLE_FORMAT_VERSION
    encoder_state: dict | None = None
    gmm: dict | None = None
    threshold: float | None = None
    config: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# dataset i/o


def load_dataset(path) -> Dataset:
    """Parse a JSON-lines dataset file; raises DataError with line numbers."""
    records: list[Record] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed line: {exc}") from exc
            if not isinstance(obj, dict):
                raise DataError(f"{path}:{lineno}: expected an object per line")
            try:
                rec = Record(
                    id=str(obj["id"]),
                    text=str(obj["text"]),
                    label=obj.get("label"),
                    split=obj.get("split", "train"),
                    is_ood=obj.get("is_ood"),
                )
            except KeyError as exc:
                raise DataError(f"{path}:{lineno}: missing key {exc}") from exc
            records.append(rec)
    if not records:
        warnings.warn(f"dataset file {path} is empty")
    return Dataset(records)


def save_dataset(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in dataset:
            obj: dict = {
                "id": rec.id,
                "text": rec.text,
                "label": rec.label,
                "split": rec.split,
            }
            if rec.is_ood is not None:
                obj["is_ood"] = rec.is_ood
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# embedding i/o (binary)


def save_embeddings(embeddings: EmbeddingSet, path) -> None:
    n, d = embeddings.vectors.shape
    with open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<II", n, d))
        for rec_id, row in zip(embeddings.ids, embeddings.vectors):
            id_bytes = rec_id.encode("utf-8")
            if len(id_bytes) > 0xFFFF:
                raise DataError(f"id too long to serialize: {rec_id[:32]!r}...")
            fh.write(struct.pack("<H", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(np.asarray(row, dtype="<f4").tobytes())


def load_embeddings(path) -> EmbeddingSet:
    with open(path, "rb") as fh:
        magic = fh.read(len(EMBEDDING_MAGIC))
        if magic != EMBEDDING_MAGIC:
            raise DataError(f"{path}: bad magic bytes {magic!r}")
        header = fh.read(8)
        if len(header) != 8:
            raise DataError(f"{path}: truncated header")
        n, d = struct.unpack("<II", header)
        ids: list[str] = []
        rows = np.empty((n, d), dtype=np.float64)
        for i in range(n):
            raw_len = fh.read(2)
            if len(raw_len) != 2:
                raise DataError(f"{path}: truncated at row {i} (id length)")
            (id_len,) = struct.unpack("<H", raw_len)
            id_bytes = fh.read(id_len)
            if len(id_bytes) != id_len:
                raise DataError(f"{path}: truncated at row {i} (id bytes)")
            rec_id = id_bytes.decode("utf-8")
            payload = fh.read(4 * d)
            if len(payload) != 4 * d:
                raise DataError(
                    f"{path}: truncated payload in row {rec_id!r} "
                    f"({len(payload)} of {4 * d} bytes)"
                )
            vec = np.frombuffer(payload, dtype="<f4").astype(np.float64)
            if not np.isfinite(vec).all():
                raise DataError(f"{path}: non-finite value in row {rec_id!r}")
            ids.append(rec_id)
            rows[i] = vec
        if fh.read(1):
            raise DataError(f"{path}: trailing bytes after {n} rows")
    return EmbeddingSet(tuple(ids), rows)


# ---------------------------------------------------------------------------
# log-prob i/o


def load_logprobs(path) -> TokenLogProbSet:
    rows: list[tuple[str, tuple[float, ...]]] = []
    tokens: dict[str, tuple[str, ...]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed line: {exc}") from exc
            if "_meta" in obj:
                continue
            try:
                rec_id = str(obj["id"])
                lps = tuple(float(v) for v in obj["logprobs"])
            except KeyError as exc:
                raise DataError(f"{path}:{lineno}: missing key {exc}") from exc
            rows.append((rec_id, lps))
            if "tokens" in obj:
                tokens[rec_id] = tuple(str(t) for t in obj["tokens"])
    return TokenLogProbSet(tuple(rows), tokens)


def save_logprobs(lps: TokenLogProbSet, path, meta: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if meta is not None:
            fh.write(json.dumps({"_meta": meta}) + "\n")
        for rec_id, values in lps.rows:
            obj: dict = {"id": rec_id, "logprobs": list(values)}
            if rec_id in lps.tokens:
                obj["tokens"] = list(lps.tokens[rec_id])
            fh.write(json.dumps(obj) + "\n")


# ---------------------------------------------------------------------------
# score i/o


def save_scores(
    path,
    ids: Sequence[str],
    scores: Sequence[float],
    is_ood: Sequence[bool] | None = None,
) -> None:
    """One JSON object per line: id, ood_score and (optionally) is_ood."""
    if len(ids) != len(scores) or (is_ood is not None and len(is_ood) != len(ids)):
        raise DataError("ids, scores and is_ood must have equal length")
    with open(path, "w", encoding="utf-8") as fh:
        for i, (rec_id, value) in enumerate(zip(ids, scores)):
            value = float(value)
            if not math.isfinite(value):
                raise DataError(f"non-finite score for id {rec_id!r}")
            obj: dict = {"id": str(rec_id), "ood_score": value}
            if is_ood is not None:
                obj["is_ood"] = bool(is_ood[i])
            fh.write(json.dumps(obj) + "\n")


def load_scores(path) -> tuple[tuple[str, ...], np.ndarray, tuple[bool, ...] | None]:
    """Returns (ids, scores, is_ood or None when absent from every row)."""
    ids: list[str] = []
    scores: list[float] = []
    flags: list[bool | None] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed line: {exc}") from exc
            if "_meta" in obj:
                continue
            try:
                ids.append(str(obj["id"]))
                scores.append(float(obj["ood_score"]))
            except KeyError as exc:
                raise DataError(f"{path}:{lineno}: missing key {exc}") from exc
            flags.append(bool(obj["is_ood"]) if "is_ood" in obj else None)
    if not ids:
        raise DataError(f"{path}: no score rows")
    if len(set(ids)) != len(ids):
        raise DataError(f"{path}: duplicate ids in score file")
    arr = np.array(scores, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise DataError(f"{path}: non-finite score values")
    if all(f is None for f in flags):
        return tuple(ids), arr, None
    if any(f is None for f in flags):
        raise DataError(f"{path}: is_ood present on some rows but not all")
    return tuple(ids), arr, tuple(bool(f) for f in flags)


# ---------------------------------------------------------------------------
# alignment


def validate_alignment(
    dataset: Dataset, aux: EmbeddingSet | TokenLogProbSet
) -> AlignmentReport:
    """Compare id sets; symmetric report, success iff the sets are equal."""
    data_ids = set(dataset.ids())
    raw_ids = aux.ids
    aux_ids = set(raw_ids() if callable(raw_ids) else raw_ids)
    return AlignmentReport(
        missing_in_aux=tuple(sorted(data_ids - aux_ids)),
        extra_in_aux=tuple(sorted(aux_ids - data_ids)),
    )


# ---------------------------------------------------------------------------
# model bundle i/o


def save_model(bundle: ModelBundle, path) -> None:
    doc = {
        "format_version": bundle.format_version,
        "encoder_state": bundle.encoder_state,
        "gmm": bundle.gmm,
        "threshold": bundle.threshold,
        "config": bundle.config,
        "provenance": bundle.provenance,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path) -> ModelBundle:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not a valid model bundle: {exc}") from exc
    version = doc.get("format_version")
    if version != BUNDLE_FORMAT_VERSION:
        raise DataError(
            f"{path}: unknown format_version {version!r} "
            f"(this build reads version {BUNDLE_FORMAT_VERSION})"
        )
    for key in ("encoder_state", "gmm", "threshold", "config", "provenance"):
        if key not in doc:
            raise DataError(f"{path}: bundle lacks required key {key!r}")
    return ModelBundle(
        format_version=version,
        encoder_state=doc["encoder_state"],
        gmm=doc["gmm"],
        threshold=doc["threshold"],
        config=doc["config"],
        provenance=doc["provenance"],
    )


def strip_train_labels(dataset: Dataset) -> Dataset:
    """Training view: train records with labels removed (never read downstream)."""
    return Dataset(
        replace(rec, label=None) if rec.split == "train" else rec
        for rec in dataset
    )
