"""Seeded synthetic benchmark: Gaussian ID clusters plus a displaced
OOD cluster in a base embedding space.

Geometry defaults: four unit-variance isotropic ID clusters whose centers
form a regular simplex (pairwise distance 6) centered at the origin of a
16-dim space, and one OOD cluster whose center sits 3 beyond its nearest
ID center, displaced radially away from the other ID centers — the
"domain at the edge of the known domains" picture. ID points split
train/valid/test; OOD points split valid/test only.
"""
from __future__ import annotations

import numpy as np

from .datamodel import Dataset, EmbeddingSet, Record
from .errors import DataError


def _simplex_centers(k: int, dim: int, pairwise: float) -> np.ndarray:
    """k origin-centered points in dim-space, all pairwise `pairwise` apart."""
    corners = np.eye(k)                       # pairwise sqrt(2) apart
    corners -= corners.mean(axis=0)
    corners *= pairwise / np.sqrt(2.0)
    centers = np.zeros((k, dim))
    centers[:, :k] = corners
    return centers


def make_synthetic_benchmark(
    seed: int = 0,
    n_per_cluster: int = 200,
    dim: int = 16,
    n_id_clusters: int = 4,
    id_center_distance: float = 6.0,
    ood_center_distance: float = 3.0,
    train_frac: float = 0.8,
    valid_frac: float = 0.1,
) -> tuple[Dataset, EmbeddingSet]:
    """Returns an aligned (Dataset, EmbeddingSet) pair ready for the pipeline."""
    if dim < n_id_clusters + 1:
        raise DataError("dim must exceed the number of ID clusters")
    if n_per_cluster < 10:
        raise DataError("need at least 10 points per cluster")
    if not (0 < train_frac and 0 < valid_frac and train_frac + valid_frac < 1):
        raise DataError("train_frac and valid_frac must be positive and sum below 1")
    rng = np.random.default_rng(seed)

    centers = _simplex_centers(n_id_clusters, dim, id_center_distance)
    # displace the OOD center radially outward from ID center 0 (away from
    # the mean of the remaining centers), so its nearest ID center is
    # exactly ood_center_distance away
    if n_id_clusters > 1:
        direction = centers[0] - centers[1:].mean(axis=0)
    else:
        direction = np.zeros(dim)
        direction[0] = 1.0
    direction = direction / np.linalg.norm(direction)
    ood_center = centers[0] + ood_center_distance * direction

    records: list[Record] = []
    ids: list[str] = []
    vectors: list[np.ndarray] = []

    n_train = int(round(train_frac * n_per_cluster))
    n_valid = int(round(valid_frac * n_per_cluster))
    for c in range(n_id_clusters):
        points = centers[c] + rng.standard_normal((n_per_cluster, dim))
        order = rng.permutation(n_per_cluster)
        for rank, j in enumerate(order):
            rec_id = f"id-c{c}-{j}"
            if rank < n_train:
                split, is_ood = "train", None
            elif rank < n_train + n_valid:
                split, is_ood = "valid", False
            else:
                split, is_ood = "test", False
            records.append(
                Record(
                    id=rec_id,
                    text=f"synthetic in-domain point {c}/{j}",
                    label=None if split == "train" else f"class-{c}",
                    split=split,
                    is_ood=is_ood,
                )
            )
            ids.append(rec_id)
            vectors.append(points[j])

    ood_points = ood_center + rng.standard_normal((n_per_cluster, dim))
    order = rng.permutation(n_per_cluster)
    half = n_per_cluster // 2
    for rank, j in enumerate(order):
        rec_id = f"ood-{j}"
        split = "valid" if rank < half else "test"
        records.append(
            Record(
                id=rec_id,
                text=f"synthetic out-of-domain point {j}",
                label="class-ood",
                split=split,
                is_ood=True,
            )
        )
        ids.append(rec_id)
        vectors.append(ood_points[j])

    dataset = Dataset(records)
    embeddings = EmbeddingSet(tuple(ids), np.vstack(vectors))
    return dataset, embeddings
