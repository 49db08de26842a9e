"""End-to-end wiring: representation training, density fitting,
threshold calibration and evaluation over one dataset + embedding pair.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import Dataset, EmbeddingSet, ModelBundle
from .density import GmmModel, density_ood_scores, fit_gmm
from .errors import DataError
from .metrics import EvalReport, ScoredSet, calibrate_threshold, evaluate
from .replearn import EncoderState, TrainConfig, embed_corpus, train


def split_embeddings(
    dataset: Dataset, embeddings: EmbeddingSet, split: str
) -> EmbeddingSet:
    """Embedding rows of one split, in dataset order."""
    wanted = tuple(rec.id for rec in dataset.subset(split))
    if not wanted:
        raise DataError(f"dataset has no {split!r} records")
    return embeddings.select(wanted)


def scored_set_for_split(
    dataset: Dataset, scores_by_id: dict[str, float], split: str
) -> ScoredSet:
    """Assemble a ScoredSet from per-id scores and the split's OOD flags."""
    ids: list[str] = []
    scores: list[float] = []
    flags: list[bool] = []
    for rec in dataset.subset(split):
        if rec.is_ood is None:
            raise DataError(f"record {rec.id!r} in {split!r} lacks an is_ood flag")
        if rec.id not in scores_by_id:
            raise DataError(f"no score for record {rec.id!r}")
        ids.append(rec.id)
        scores.append(scores_by_id[rec.id])
        flags.append(rec.is_ood)
    return ScoredSet(tuple(ids), np.array(scores), np.array(flags))


@dataclass
class PipelineResult:
    state: EncoderState | None
    gmm: GmmModel
    threshold: float
    valid_scored: ScoredSet
    test_scored: ScoredSet
    valid_report: EvalReport
    test_report: EvalReport

    def to_bundle(self, config: dict, provenance: dict) -> ModelBundle:
        return ModelBundle(
            encoder_state=self.state.to_dict() if self.state is not None else None,
            gmm=self.gmm.to_dict(),
            threshold=self.threshold,
            config=config,
            provenance=provenance,
        )


def density_scores_by_id(
    gmm: GmmModel, embeddings: EmbeddingSet
) -> dict[str, float]:
    values = density_ood_scores(gmm, embeddings.vectors)
    return {rec_id: float(v) for rec_id, v in zip(embeddings.ids, values)}


def run_pipeline(
    dataset: Dataset,
    base_embeddings: EmbeddingSet,
    cfg: TrainConfig,
    n_components: int = 1,
    variance_floor: float = 1e-6,
    fpr_budget: float = 0.05,
    tpr_level: float = 0.95,
    adapt: bool = True,
) -> PipelineResult:
    """Train (optionally), fit the density, calibrate, score and evaluate.

    With ``adapt=False`` the representation step is skipped and the density
    is fit on raw base embeddings (the no-training baseline).
    """
    train_base = split_embeddings(dataset, base_embeddings, "train")

    if adapt:
        state: EncoderState | None = train(train_base, cfg)
        def view(emb: EmbeddingSet) -> EmbeddingSet:
            return embed_corpus(state, emb)
    else:
        state = None
        def view(emb: EmbeddingSet) -> EmbeddingSet:
            return emb

    gmm = fit_gmm(
        view(train_base).vectors,
        n_components=n_components,
        seed=cfg.seed,
        variance_floor=variance_floor,
    )

    valid_emb = view(split_embeddings(dataset, base_embeddings, "valid"))
    test_emb = view(split_embeddings(dataset, base_embeddings, "test"))
    valid_scores = density_scores_by_id(gmm, valid_emb)
    test_scores = density_scores_by_id(gmm, test_emb)

    valid_scored = scored_set_for_split(dataset, valid_scores, "valid")
    test_scored = scored_set_for_split(dataset, test_scores, "test")
    threshold = calibrate_threshold(valid_scored.id_scores, fpr_budget)

    return PipelineResult(
        state=state,
        gmm=gmm,
        threshold=threshold,
        valid_scored=valid_scored,
        test_scored=test_scored,
        valid_report=evaluate(valid_scored, tpr_level),
        test_report=evaluate(test_scored, tpr_level),
    )
