"""Detection metrics and evaluation reports.

Out-of-domain is the positive class throughout; every metric consumes
scores oriented so that higher means more OOD. AUROC uses the rank
(Mann-Whitney) form with midranks for ties; AUPR is average precision
with tied scores treated as one atomic group; FPR at a TPR level picks
the largest observed threshold whose "score >= threshold" rule still
reaches the level.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence
import math

import numpy as np
from scipy.stats import rankdata

from .errors import DataError


@dataclass(frozen=True)
class ScoredSet:
    """Aligned ids, OOD scores and ground-truth OOD flags."""

    ids: tuple[str, ...]
    scores: np.ndarray
    is_ood: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=np.float64))
        object.__setattr__(self, "is_ood", np.asarray(self.is_ood, dtype=bool))
        if len(self.ids) != len(self.scores) or len(self.ids) != len(self.is_ood):
            raise DataError("ids, scores and is_ood must have equal length")
        if len(self.ids) == 0:
            raise DataError("scored set is empty")
        if not np.isfinite(self.scores).all():
            raise DataError("scores contain non-finite values")

    @classmethod
    def from_arrays(
        cls, ood_scores: Sequence[float], id_scores: Sequence[float]
    ) -> "ScoredSet":
        """Build from the two class score lists with generated ids."""
        n_ood, n_id = len(ood_scores), len(id_scores)
        ids = tuple(f"ood-{i}" for i in range(n_ood)) + tuple(
            f"id-{i}" for i in range(n_id)
        )
        scores = np.concatenate(
            [np.asarray(ood_scores, dtype=np.float64), np.asarray(id_scores, dtype=np.float64)]
        )
        flags = np.concatenate([np.ones(n_ood, dtype=bool), np.zeros(n_id, dtype=bool)])
        return cls(ids, scores, flags)

    @property
    def ood_scores(self) -> np.ndarray:
        return self.scores[self.is_ood]

    @property
    def id_scores(self) -> np.ndarray:
        return self.scores[~self.is_ood]

    @property
    def n_ood(self) -> int:
        return int(self.is_ood.sum())

    @property
    def n_id(self) -> int:
        return int((~self.is_ood).sum())

    def require_both_classes(self) -> None:
        if self.n_ood == 0 or self.n_id == 0:
            raise DataError(
                f"need both classes to evaluate, got {self.n_id} ID and "
                f"{self.n_ood} OOD"
            )


def auroc(scored: ScoredSet) -> float:
    """Probability a random OOD item outscores a random ID item, ties 1/2."""
    scored.require_both_classes()
    ranks = rankdata(scored.scores)
    n_pos = scored.n_ood
    n_neg = scored.n_id
    rank_sum = ranks[scored.is_ood].sum()
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def aupr_ood(scored: ScoredSet) -> float:
    """Average precision with OOD positive; each tied-score block enters
    the precision-recall curve as a single point."""
    scored.require_both_classes()
    order = np.argsort(-scored.scores, kind="stable")
    sorted_scores = scored.scores[order]
    sorted_pos = scored.is_ood[order].astype(np.float64)
    # boundaries of equal-score groups in descending order
    boundary = np.nonzero(np.diff(sorted_scores))[0]
    ends = np.append(boundary, len(sorted_scores) - 1)
    tp = np.cumsum(sorted_pos)[ends]
    counts = ends + 1.0
    precision = tp / counts
    delta_tp = np.diff(np.concatenate(([0.0], tp)))
    return float((precision * delta_tp).sum() / scored.n_ood)


def fpr_at_tpr(scored: ScoredSet, level: float = 0.95) -> float:
    """FPR at the loosest observed threshold still reaching the TPR level.

    The detector predicts OOD when score >= threshold. Candidate thresholds
    are the observed scores; the largest one with TPR >= level wins (the
    minimum score always qualifies since it flags everything).
    """
    scored.require_both_classes()
    if not (0 <= level <= 1):
        raise DataError("level must be in [0, 1]")
    thresholds = np.unique(scored.scores)[::-1]
    pos = scored.scores[scored.is_ood]
    neg = scored.scores[~scored.is_ood]
    tpr = (pos[None, :] >= thresholds[:, None]).mean(axis=1)
    reaching = np.nonzero(tpr >= level)[0]
    theta = thresholds[reaching[0]]
    return float((neg >= theta).mean())


def calibrate_threshold(id_scores: np.ndarray, budget: float = 0.05) -> float:
    """Nearest-rank upper quantile of ID scores: the smallest observed score
    that at most a ``budget`` fraction of ID items strictly exceed."""
    scores = np.asarray(id_scores, dtype=np.float64)
    if scores.ndim != 1 or len(scores) == 0:
        raise DataError("id_scores must be a nonempty 1-D array")
    if not np.isfinite(scores).all():
        raise DataError("id_scores contain non-finite values")
    if not (0 <= budget < 1):
        raise DataError("budget must be in [0, 1)")
    q = 1.0 - budget
    n = len(scores)
    rank = math.ceil(q * n - 1e-12)
    idx = min(max(rank, 1), n) - 1
    return float(np.sort(scores)[idx])


@dataclass(frozen=True)
class EvalReport:
    auroc: float
    aupr_ood: float
    fpr_at_tpr: float
    tpr_level: float
    n_id: int
    n_ood: int
    config: dict | None = None

    def to_dict(self) -> dict:
        return {
            "auroc": self.auroc,
            "aupr_ood": self.aupr_ood,
            "fpr_at_tpr": self.fpr_at_tpr,
            "tpr_level": self.tpr_level,
            "n_id": self.n_id,
            "n_ood": self.n_ood,
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "EvalReport":
        return cls(
            auroc=float(doc["auroc"]),
            aupr_ood=float(doc["aupr_ood"]),
            fpr_at_tpr=float(doc["fpr_at_tpr"]),
            tpr_level=float(doc["tpr_level"]),
            n_id=int(doc["n_id"]),
            n_ood=int(doc["n_ood"]),
            config=doc.get("config"),
        )


def evaluate(
    scored: ScoredSet, level: float = 0.95, config: dict | None = None
) -> EvalReport:
    scored.require_both_classes()
    return EvalReport(
        auroc=auroc(scored),
        aupr_ood=aupr_ood(scored),
        fpr_at_tpr=fpr_at_tpr(scored, level),
        tpr_level=level,
        n_id=scored.n_id,
        n_ood=scored.n_ood,
        config=config,
    )


@dataclass(frozen=True)
class SweepEntry:
    k: int
    gamma: float
    report: EvalReport

    def to_dict(self) -> dict:
        return {"k": self.k, "gamma": self.gamma, "report": self.report.to_dict()}


@dataclass(frozen=True)
class SweepReport:
    entries: tuple[SweepEntry, ...]
    best_k: int
    best_gamma: float

    def to_dict(self) -> dict:
        return {
            "entries": [e.to_dict() for e in self.entries],
            "best_k": self.best_k,
            "best_gamma": self.best_gamma,
        }


def sweep(
    k_values: Sequence[int],
    gamma_values: Sequence[float],
    scored_for: Callable[[int, float], ScoredSet],
    level: float = 0.95,
) -> SweepReport:
    """Evaluate every (cluster count, contrastive weight) grid point on
    validation scores and pick the winner.

    Selection order: highest AUPR, then highest AUROC, then the smaller
    cluster count, then the smaller weight.
    """
    if len(k_values) == 0 or len(gamma_values) == 0:
        raise DataError("sweep needs a nonempty grid")
    if len(set(k_values)) != len(k_values) or len(set(gamma_values)) != len(gamma_values):
        raise DataError("sweep grid values must be distinct")
    entries = []
    for k in k_values:
        for gamma in gamma_values:
            try:
                scored = scored_for(int(k), float(gamma))
            except Exception as exc:
                raise type(exc)(f"sweep point k={k}, gamma={gamma}: {exc}") from exc
            report = evaluate(scored, level, config={"k": int(k), "gamma": float(gamma)})
            entries.append(SweepEntry(k=int(k), gamma=float(gamma), report=report))
    best = max(
        entries, key=lambda e: (e.report.aupr_ood, e.report.auroc, -e.k, -e.gamma)
    )
    return SweepReport(entries=tuple(entries), best_k=best.k, best_gamma=best.gamma)


@dataclass(frozen=True)
class AggregateReport:
    n_splits: int
    per_split: tuple[dict, ...]
    mean: dict[str, float]
    std: dict[str, float]
    config: dict | None = None

    def to_dict(self) -> dict:
        return {
            "n_splits": self.n_splits,
            "per_split": [dict(d) for d in self.per_split],
            "mean": dict(self.mean),
            "std": dict(self.std),
            "config": self.config,
        }


_AGG_FIELDS = ("auroc", "aupr_ood", "fpr_at_tpr")


def aggregate_splits(reports: Iterable[EvalReport]) -> AggregateReport:
    """Mean and population standard deviation of each metric across splits.

    Reports must agree on TPR level and config snapshot; per-split values
    are carried along for the record.
    """
    reports = list(reports)
    if not reports:
        raise DataError("no reports to aggregate")
    levels = {r.tpr_level for r in reports}
    if len(levels) != 1:
        raise DataError("reports disagree on tpr_level; refusing to aggregate")
    configs = [r.config for r in reports]
    if any(c != configs[0] for c in configs[1:]):
        raise DataError("reports disagree on config; refusing to aggregate")
    mean: dict[str, float] = {}
    std: dict[str, float] = {}
    for name in _AGG_FIELDS:
        vals = np.array([getattr(r, name) for r in reports], dtype=np.float64)
        mean[name] = float(vals.mean())
        std[name] = float(vals.std())
    per_split = tuple(
        {name: getattr(r, name) for name in _AGG_FIELDS} for r in reports
    )
    return AggregateReport(
        n_splits=len(reports),
        per_split=per_split,
        mean=mean,
        std=std,
        config=configs[0],
    )


def pca2d(points: np.ndarray) -> np.ndarray:
    """Project rows onto the top two principal axes.

    Signs are fixed by forcing the first nonzero loading of each axis
    positive, so equal inputs give byte-identical projections.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 3:
        raise DataError("pca2d expects an (n, d) array with n >= 3")
    if x.shape[1] < 2:
        raise DataError("pca2d needs at least 2 input dimensions")
    centered = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:2]
    for i in range(2):
        nz = np.nonzero(components[i])[0]
        if len(nz) > 0 and components[i, nz[0]] < 0:
            components[i] = -components[i]
    return centered @ components.T


def pca2d_project(
    embeddings: np.ndarray, is_ood: Sequence[bool]
) -> list[tuple[float, float, bool]]:
    """Plot-ready rows (x, y, is_ood) from the 2-D principal projection."""
    flags = np.asarray(is_ood, dtype=bool)
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or len(flags) != x.shape[0]:
        raise DataError("embeddings and is_ood must have matching row counts")
    coords = pca2d(x)
    return [
        (float(coords[i, 0]), float(coords[i, 1]), bool(flags[i]))
        for i in range(coords.shape[0])
    ]
