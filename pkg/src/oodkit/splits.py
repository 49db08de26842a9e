"""ID/OOD split generation from labeled datasets.

Two protocols: ``coverage`` keeps a random-permutation prefix of classes
whose cumulative share of training points reaches the coverage bound, and
``fixed`` samples an exact number of OOD classes uniformly. Both remove
OOD records from the train split, flag OOD valid/test records with
``is_ood``, and strip labels from the training view so downstream stages
cannot read them.
"""
from __future__ import annotations

import itertools
import warnings
from collections import Counter
from dataclasses import dataclass, replace

import numpy as np

from .datamodel import Dataset, Record
from .errors import DataError

# permutations drawn per seed before concluding the sampler is stuck;
# infeasible coverage is detected analytically up front, so this only
# guards against astronomically unlucky draws
_MAX_PERMUTATION_TRIES = 1000


@dataclass(frozen=True)
class SplitSpec:
    """One ID/OOD class partition with the seed that produced it."""

    seed: int
    id_classes: tuple[str, ...]
    ood_classes: tuple[str, ...]
    coverage: float

    def __post_init__(self) -> None:
        if set(self.id_classes) & set(self.ood_classes):
            raise DataError("id_classes and ood_classes overlap")
        if not self.ood_classes:
            raise DataError("ood_classes must be nonempty")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "id_classes": list(self.id_classes),
            "ood_classes": list(self.ood_classes),
            "coverage": self.coverage,
        }


def _train_class_counts(dataset: Dataset) -> Counter:
    counts: Counter = Counter()
    for rec in dataset:
        if rec.split == "train":
            if rec.label is None:
                raise DataError(f"train record {rec.id!r} has no label")
            counts[rec.label] += 1
    return counts


def coverage_prefix(
    counts: dict[str, int], permutation: list[str], coverage: float
) -> tuple[tuple[str, ...], tuple[str, ...]] | None:
    """Shortest prefix of ``permutation`` whose cumulative train-point share
    reaches ``coverage``; None when only the full class list qualifies."""
    total = sum(counts.values())
    acc = 0
    for i, cls in enumerate(permutation):
        acc += counts.get(cls, 0)
        if acc / total >= coverage:
            if i + 1 == len(permutation):
                return None
            return tuple(permutation[: i + 1]), tuple(permutation[i + 1 :])
    return None


def apply_split(dataset: Dataset, spec: SplitSpec) -> Dataset:
    """Remove OOD train records, flag OOD valid/test records, strip train labels."""
    ood = set(spec.ood_classes)
    out: list[Record] = []
    for rec in dataset:
        if rec.split == "train":
            if rec.label in ood:
                continue
            out.append(replace(rec, label=None, is_ood=None))
        else:
            out.append(replace(rec, is_ood=rec.label in ood))
    return Dataset(out)


def make_coverage_split(
    dataset: Dataset, coverage: float, seed: int
) -> tuple[SplitSpec, Dataset]:
    """Sample a class permutation and keep the minimal covering prefix as ID."""
    if not (0 < coverage <= 1):
        raise DataError(f"coverage {coverage!r} outside (0, 1]")
    counts = _train_class_counts(dataset)
    if len(counts) < 2:
        raise DataError("coverage split needs at least 2 distinct labels")
    classes = sorted(counts)
    total = sum(counts.values())
    # a proper prefix exists for some permutation iff dropping the smallest
    # class still meets the bound; otherwise every permutation is exhausted
    if (total - min(counts.values())) / total < coverage:
        raise DataError(
            f"coverage {coverage} cannot be met while leaving any class OOD"
        )
    rng = np.random.default_rng(seed)
    for _ in range(_MAX_PERMUTATION_TRIES):
        permutation = [classes[i] for i in rng.permutation(len(classes))]
        result = coverage_prefix(counts, permutation, coverage)
        if result is not None:
            id_classes, ood_classes = result
            spec = SplitSpec(seed, tuple(sorted(id_classes)), tuple(sorted(ood_classes)), coverage)
            return spec, apply_split(dataset, spec)
    raise DataError("exhausted permutations without finding a proper prefix")


def make_fixed_ood_split(
    dataset: Dataset, n_ood_classes: int, seed: int
) -> tuple[SplitSpec, Dataset]:
    """Sample exactly ``n_ood_classes`` labels uniformly as OOD."""
    counts = _train_class_counts(dataset)
    classes = sorted(counts)
    if not (1 <= n_ood_classes < len(classes)):
        raise DataError(
            f"n_ood_classes={n_ood_classes} out of range for {len(classes)} classes"
        )
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(classes), size=n_ood_classes, replace=False)
    ood_classes = tuple(sorted(classes[i] for i in picked))
    id_classes = tuple(c for c in classes if c not in ood_classes)
    covered = sum(counts[c] for c in id_classes) / sum(counts.values())
    spec = SplitSpec(seed, id_classes, ood_classes, covered)
    return spec, apply_split(dataset, spec)


def _count_feasible_partitions(
    counts: dict[str, int], protocol: str, coverage: float, n_ood_classes: int
) -> int | None:
    """Number of distinct class partitions each protocol can emit, or None
    when the class count makes enumeration unreasonable."""
    classes = sorted(counts)
    c = len(classes)
    if protocol == "fixed":
        import math

        return math.comb(c, n_ood_classes)
    if c > 16:
        return None
    total = sum(counts.values())
    feasible = 0
    # the prefix rule can emit ID set S iff S covers the bound and some
    # element of S is load-bearing (dropping it breaks the bound)
    for r in range(1, c):
        for subset in itertools.combinations(classes, r):
            share = sum(counts[x] for x in subset)
            if share / total < coverage:
                continue
            if any((share - counts[x]) / total < coverage for x in subset):
                feasible += 1
    return feasible


def make_split_family(
    dataset: Dataset,
    protocol: str,
    n_splits: int,
    base_seed: int,
    coverage: float = 0.75,
    n_ood_classes: int = 2,
) -> list[tuple[SplitSpec, Dataset]]:
    """Generate ``n_splits`` splits with distinct class partitions when
    possible; seeds run ``base_seed + index``."""
    if n_splits < 1:
        raise DataError("n_splits must be >= 1")
    if protocol not in ("coverage", "fixed"):
        raise DataError(f"unknown split protocol {protocol!r}")
    counts = _train_class_counts(dataset)
    max_distinct = _count_feasible_partitions(
        counts, protocol, coverage, n_ood_classes
    )

    out: list[tuple[SplitSpec, Dataset]] = []
    seen: set[tuple[str, ...]] = set()
    seed = base_seed
    attempts = 0
    max_attempts = 50 * n_splits + 100
    while len(out) < n_splits and attempts < max_attempts:
        if protocol == "coverage":
            spec, transformed = make_coverage_split(dataset, coverage, seed)
        else:
            spec, transformed = make_fixed_ood_split(dataset, n_ood_classes, seed)
        if spec.ood_classes not in seen:
            seen.add(spec.ood_classes)
            out.append((spec, transformed))
        seed += 1
        attempts += 1
        if max_distinct is not None and len(out) >= max_distinct:
            break
    if len(out) < n_splits:
        warnings.warn(
            f"only {len(out)} distinct partitions available "
            f"({n_splits} requested); returning all of them"
        )
    return out
