"""Shared fixtures: small labeled datasets and alignable embeddings."""
from __future__ import annotations

import numpy as np
import pytest

from oodkit.datamodel import Dataset, EmbeddingSet, Record


def make_labeled_dataset(
    n_classes: int = 4,
    per_class_train: int = 30,
    per_class_eval: int = 6,
    seed: int = 0,
) -> Dataset:
    """Balanced multi-class dataset with labeled train/valid/test records."""
    rng = np.random.default_rng(seed)
    words = ["alpha", "beta", "gamma", "delta", "omega", "sigma", "kappa", "zeta"]
    records: list[Record] = []
    for c in range(n_classes):
        label = f"class-{c}"
        for j in range(per_class_train + 2 * per_class_eval):
            text = " ".join(rng.choice(words, size=5 + (c + j) % 4))
            if j < per_class_train:
                split = "train"
            elif j < per_class_train + per_class_eval:
                split = "valid"
            else:
                split = "test"
            records.append(
                Record(id=f"{label}-{j}", text=text, label=label, split=split)
            )
    return Dataset(records)


def embeddings_for(dataset: Dataset, dim: int = 8, seed: int = 0) -> EmbeddingSet:
    """Random but seeded embeddings aligned with the dataset's ids, with a
    per-class offset so classes are separable."""
    rng = np.random.default_rng(seed)
    labels = sorted({rec.label for rec in dataset if rec.label is not None})
    offsets = {lab: rng.normal(scale=4.0, size=dim) for lab in labels}
    ids, rows = [], []
    for rec in dataset:
        base = offsets.get(rec.label, np.zeros(dim))
        ids.append(rec.id)
        rows.append(base + rng.normal(size=dim))
    return EmbeddingSet(tuple(ids), np.vstack(rows))


@pytest.fixture
def labeled_dataset() -> Dataset:
    return make_labeled_dataset()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)
