"""Teacher-forced token log-probs under a causal language model."""

from __future__ import annotations

import numpy as np
import torch

from .formats import read_dataset, write_logprobs
from .jobs import ExportJob
from .models import load_causal_lm, pad_batch, run_batched

CONVENTION_WITH_BOS = (
    "natural-log P(token_t | BOS, tokens_<t); BOS prepended, all tokens scored"
)
CONVENTION_NO_BOS = (
    "natural-log P(token_t | tokens_<t); no BOS available, first token unscored"
)


def ln_score(logprobs) -> float:
    """Log of the length-normalized likelihood: the mean token log-prob."""
    arr = np.asarray(list(logprobs), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot length-normalize an empty log-prob stream")
    return float(arr.mean())


def _score_batch(model, token_rows, bos_id, pad_id, device):
    """Per sequence: log-prob of each scored token given its prefix."""
    if bos_id is not None:
        inputs = [[bos_id] + list(row) for row in token_rows]
        targets = [list(row) for row in token_rows]
    else:
        inputs = [list(row) for row in token_rows]
        targets = [list(row)[1:] for row in token_rows]
    ids, mask = pad_batch(inputs, pad_id, device)
    with torch.no_grad():
        logits = model(input_ids=ids, attention_mask=mask).logits
        logp = torch.log_softmax(logits.double(), dim=-1)
    out = []
    for r, row_targets in enumerate(targets):
        values = [float(logp[r, t, tok]) for t, tok in enumerate(row_targets)]
        out.append(values)
    return out


def token_logprobs(model, tokenizer, texts, batch_size: int = 32, device: str = "cpu"):
    """Teacher-forced log-probs for each text.

    Returns ``(rows, token_strings, convention)``: per text a list of
    log-probs (all <= 0), the corresponding token strings, and the
    sentence describing which positions were scored.
    """
    encoded = tokenizer(list(texts))["input_ids"]
    bos_id = tokenizer.bos_token_id
    if bos_id is not None:
        # drop a tokenizer-inserted leading BOS so it is not scored twice
        encoded = [row[1:] if row[:1] == [bos_id] else row for row in encoded]
    pad_id = tokenizer.pad_token_id if tokenizer.pad_token_id is not None else 0
    rows = run_batched(
        encoded,
        batch_size,
        lambda chunk: _score_batch(model, chunk, bos_id, pad_id, device),
    )
    token_strings = []
    for row in encoded:
        scored = row if bos_id is not None else row[1:]
        token_strings.append([tokenizer.convert_ids_to_tokens(t) for t in scored])
    convention = CONVENTION_WITH_BOS if bos_id is not None else CONVENTION_NO_BOS
    return rows, token_strings, convention


def export_logprobs(job: ExportJob, with_tokens: bool = False) -> str:
    """Score every dataset record and write the log-prob JSONL file.

    The ``_meta`` header line records the model identifier, the log
    base, and which token positions carry a score. Returns the output
    path.
    """
    pairs = read_dataset(job.dataset_path)
    model, tokenizer = load_causal_lm(job.model, job.device)
    texts = [text for _, text in pairs]
    rows, token_strings, convention = token_logprobs(
        model, tokenizer, texts, batch_size=job.batch_size, device=job.device
    )
    meta = {
        "exporter": "oodx",
        "model": job.model,
        "base": "e",
        "convention": convention,
    }
    ids = [rec_id for rec_id, _ in pairs]
    tokens = (
        {rec_id: toks for rec_id, toks in zip(ids, token_strings)}
        if with_tokens
        else None
    )
    write_logprobs(job.out_path, zip(ids, rows), meta, tokens)
    return str(job.out_path)
