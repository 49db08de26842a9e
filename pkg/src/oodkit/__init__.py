"""Encoder-agnostic out-of-domain text detection toolkit.

Two scoring families over user-supplied artifacts:

* likelihood: length-normalized and (noised-background) likelihood-ratio
  scores over token log-probs or built-in additive-smoothing n-gram LMs;
* density: a trainable head adapts frozen base embeddings with a joint
  clustering + contrastive objective, then a Gaussian mixture scores
  points by negative log density.

Higher scores always mean more likely out-of-domain.
"""
from ._version import __version__
from .config import RunConfig, load_config
from .datamodel import (
    AlignmentReport,
    Dataset,
    EmbeddingSet,
    ModelBundle,
    Record,
    TokenLogProbSet,
    load_dataset,
    load_embeddings,
    load_logprobs,
    load_model,
    load_scores,
    save_dataset,
    save_embeddings,
    save_logprobs,
    save_model,
    save_scores,
    validate_alignment,
)
from .density import GmmModel, decide, decide_score, density_ood_scores, fit_gmm, log_density
from .errors import DataError, NumericError, OodkitError, UsageError
from .likelihood import (
    NGramLM,
    NoiseConfig,
    OODScore,
    UniformLM,
    length_correlation,
    lm_logprobs,
    make_noisy_corpus,
    score_ln,
    score_lr,
    score_lr_ws,
    score_nlr,
    substitution_distribution,
    to_ood_score,
    tokenize,
    train_ngram_lm,
)
from .metrics import (
    AggregateReport,
    EvalReport,
    ScoredSet,
    SweepReport,
    aggregate_splits,
    aupr_ood,
    auroc,
    calibrate_threshold,
    evaluate,
    fpr_at_tpr,
    pca2d,
    pca2d_project,
    sweep,
)
from .pipeline import PipelineResult, run_pipeline, scored_set_for_split, split_embeddings
from .replearn import (
    EncoderHead,
    EncoderState,
    ProjectionHead,
    TrainConfig,
    cluster_loss,
    contrastive_loss,
    embed_corpus,
    head_forward,
    joint_loss,
    joint_loss_and_grads,
    kmeans,
    soft_assign,
    target_distribution,
    train,
)
from .service import ProviderConfig, build_server, fetch_embeddings, serve
from .splits import (
    SplitSpec,
    apply_split,
    make_coverage_split,
    make_fixed_ood_split,
    make_split_family,
)
from .synthetic import make_synthetic_benchmark

__all__ = [
    "__version__",
    "AggregateReport",
    "AlignmentReport",
    "DataError",
    "Dataset",
    "EmbeddingSet",
    "EncoderHead",
    "EncoderState",
    "EvalReport",
    "GmmModel",
    "ModelBundle",
    "NGramLM",
    "NoiseConfig",
    "NumericError",
    "OODScore",
    "OodkitError",
    "PipelineResult",
    "ProjectionHead",
    "ProviderConfig",
    "Record",
    "RunConfig",
    "ScoredSet",
    "SplitSpec",
    "SweepReport",
    "TokenLogProbSet",
    "TrainConfig",
    "UniformLM",
    "UsageError",
    "aggregate_splits",
    "apply_split",
    "aupr_ood",
    "auroc",
    "build_server",
    "calibrate_threshold",
    "cluster_loss",
    "contrastive_loss",
    "decide",
    "decide_score",
    "density_ood_scores",
    "embed_corpus",
    "evaluate",
    "fetch_embeddings",
    "fit_gmm",
    "fpr_at_tpr",
    "head_forward",
    "joint_loss",
    "joint_loss_and_grads",
    "kmeans",
    "length_correlation",
    "lm_logprobs",
    "load_config",
    "load_dataset",
    "load_embeddings",
    "load_logprobs",
    "load_model",
    "load_scores",
    "log_density",
    "make_coverage_split",
    "make_fixed_ood_split",
    "make_noisy_corpus",
    "make_split_family",
    "make_synthetic_benchmark",
    "pca2d",
    "pca2d_project",
    "run_pipeline",
    "save_dataset",
    "save_embeddings",
    "save_logprobs",
    "save_model",
    "save_scores",
    "score_ln",
    "score_lr",
    "score_lr_ws",
    "score_nlr",
    "scored_set_for_split",
    "serve",
    "soft_assign",
    "split_embeddings",
    "substitution_distribution",
    "sweep",
    "target_distribution",
    "to_ood_score",
    "tokenize",
    "train",
    "train_ngram_lm",
    "validate_alignment",
]
