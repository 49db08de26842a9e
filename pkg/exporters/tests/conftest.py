"""Shared fixtures: tiny randomly initialized local models and datasets.

Everything is constructed on disk inside the test session — no network,
no pretrained weights — so the tests exercise exactly the same loading
path a real checkpoint directory would use.
"""

from __future__ import annotations

import json

import pytest
import torch

WORDS = [
    "pay", "bill", "card", "loan", "rate",
    "open", "close", "branch", "account", "limit",
]
SPECIALS = ["[PAD]", "[UNK]", "[BOS]"]
VOCAB = {tok: i for i, tok in enumerate(SPECIALS + WORDS)}
HIDDEN = 16


def _write_tokenizer(target_dir, with_bos: bool) -> None:
    from tokenizers import Tokenizer
    from tokenizers.models import WordLevel
    from tokenizers.pre_tokenizers import Whitespace
    from transformers import PreTrainedTokenizerFast

    tok = Tokenizer(WordLevel(VOCAB, unk_token="[UNK]"))
    tok.pre_tokenizer = Whitespace()
    kwargs = {"pad_token": "[PAD]", "unk_token": "[UNK]"}
    if with_bos:
        kwargs["bos_token"] = "[BOS]"
    fast = PreTrainedTokenizerFast(tokenizer_object=tok, **kwargs)
    fast.save_pretrained(target_dir)


@pytest.fixture(scope="session")
def encoder_dir(tmp_path_factory):
    """Directory with a tiny bidirectional encoder plus tokenizer."""
    from transformers import BertConfig, BertModel

    target = tmp_path_factory.mktemp("encoder")
    _write_tokenizer(target, with_bos=False)
    torch.manual_seed(0)
    config = BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=HIDDEN,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=32,
        max_position_embeddings=64,
        pad_token_id=VOCAB["[PAD]"],
    )
    BertModel(config).save_pretrained(target)
    return str(target)


def _write_causal_lm(target, seed: int) -> None:
    from transformers import GPT2Config, GPT2LMHeadModel

    _write_tokenizer(target, with_bos=True)
    torch.manual_seed(seed)
    config = GPT2Config(
        vocab_size=len(VOCAB),
        n_positions=64,
        n_embd=HIDDEN,
        n_layer=2,
        n_head=2,
        bos_token_id=VOCAB["[BOS]"],
        eos_token_id=VOCAB["[BOS]"],
        pad_token_id=VOCAB["[PAD]"],
    )
    GPT2LMHeadModel(config).save_pretrained(target)


@pytest.fixture(scope="session")
def lm_dir(tmp_path_factory):
    """Directory with a tiny causal LM plus tokenizer (has a BOS token)."""
    target = tmp_path_factory.mktemp("lm")
    _write_causal_lm(target, seed=0)
    return str(target)


@pytest.fixture(scope="session")
def lm_dir_alt(tmp_path_factory):
    """A second causal LM with different weights."""
    target = tmp_path_factory.mktemp("lm-alt")
    _write_causal_lm(target, seed=1)
    return str(target)


def write_dataset(path, rows) -> str:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return str(path)


@pytest.fixture(scope="session")
def dataset_path(tmp_path_factory):
    """Ten records with 3-6 known-vocabulary words each."""
    rows = []
    for i in range(10):
        words = [WORDS[(i + j) % len(WORDS)] for j in range(3 + i % 4)]
        split = "train" if i < 6 else ("valid" if i < 8 else "test")
        rows.append(
            {"id": f"d{i}", "text": " ".join(words), "label": f"c{i % 3}", "split": split}
        )
    target = tmp_path_factory.mktemp("data") / "ten.jsonl"
    return write_dataset(target, rows)
