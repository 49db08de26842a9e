"""Likelihood-based OOD scoring over token log-prob streams.

Four scores, all in the natural-log domain (products of token
probabilities would underflow at float precision):

* LN: mean token log-probability under the in-domain LM, i.e. the log of
  the length-normalized likelihood (inverse perplexity).
* LR: summed in-domain log-likelihood minus summed background
  log-likelihood.
* NLR: the same ratio with per-token means, i.e. log LN_id - log LN_bg.
* LR_ws: LR whose background LM is trained on a word-substitution-noised
  copy of the training corpus.

Higher likelihood means more in-domain, so the uniform OOD orientation
(higher = more OOD) is obtained by negating exactly once, here.

A built-in additive-smoothing n-gram LM keeps the pipeline runnable
without any neural stack; externally computed log-probs enter through
TokenLogProbSet files.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import special

from .datamodel import Dataset
from .errors import DataError

BOS = "<s>"
UNK = "<unk>"


@dataclass(frozen=True)
class OODScore:
    """Uniform score orientation across methods: higher = more likely OOD."""

    id: str
    value: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.value):
            raise DataError(f"non-finite OOD score for {self.id!r}")


@dataclass(frozen=True)
class LikelihoodScore:
    id: str
    log_ln: float
    length: int
    log_lr: float | None = None
    log_nlr: float | None = None


@dataclass(frozen=True)
class NoiseConfig:
    p_noise: float
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 <= self.p_noise <= 1.0):
            raise DataError(f"p_noise {self.p_noise!r} outside [0, 1]")


def _check_stream(logprobs: Sequence[float], name: str = "logprobs") -> np.ndarray:
    arr = np.asarray(logprobs, dtype=np.float64)
    if arr.size == 0:
        raise DataError(f"{name}: empty log-prob sequence")
    if not np.isfinite(arr).all():
        raise DataError(f"{name}: non-finite log-probability")
    if (arr > 0).any():
        raise DataError(f"{name}: positive log-probability (probabilities > 1)")
    return arr


def score_ln(logprobs: Sequence[float]) -> float:
    """Log of the length-normalized likelihood: the mean token log-prob."""
    arr = _check_stream(logprobs)
    return float(arr.mean())


def score_lr(logprobs_id: Sequence[float], logprobs_bg: Sequence[float]) -> float:
    """Log likelihood ratio of in-domain over background streams."""
    a = _check_stream(logprobs_id, "logprobs_id")
    b = _check_stream(logprobs_bg, "logprobs_bg")
    if a.size != b.size:
        raise DataError(
            f"stream length mismatch: id has {a.size} tokens, background {b.size}"
        )
    return float(a.sum() - b.sum())


def score_nlr(logprobs_id: Sequence[float], logprobs_bg: Sequence[float]) -> float:
    """Log of the length-normalized likelihood ratio (difference of means)."""
    a = _check_stream(logprobs_id, "logprobs_id")
    b = _check_stream(logprobs_bg, "logprobs_bg")
    if a.size != b.size:
        raise DataError(
            f"stream length mismatch: id has {a.size} tokens, background {b.size}"
        )
    return float(a.mean() - b.mean())


def to_ood_score(rec_id: str, log_score: float) -> OODScore:
    return OODScore(rec_id, -log_score)


# ---------------------------------------------------------------------------
# word-substitution noise


def substitution_distribution(corpus: Iterable[Sequence[str]]) -> tuple[list[str], np.ndarray]:
    """Square-root-of-frequency substitution law over the corpus vocabulary."""
    freq = Counter()
    for sent in corpus:
        freq.update(sent)
    if not freq:
        raise DataError("empty corpus: no vocabulary to sample substitutions from")
    vocab = sorted(freq)
    weights = np.sqrt(np.array([freq[w] for w in vocab], dtype=np.float64))
    return vocab, weights / weights.sum()


def make_noisy_corpus(
    corpus: Sequence[Sequence[str]], cfg: NoiseConfig
) -> list[list[str]]:
    """Each token independently replaced with probability ``p_noise`` by a
    draw from the square-root-frequency law (which may redraw the same
    word). Deterministic under the seed."""
    noisy, _ = make_noisy_corpus_with_mask(corpus, cfg)
    return noisy


def make_noisy_corpus_with_mask(
    corpus: Sequence[Sequence[str]], cfg: NoiseConfig
) -> tuple[list[list[str]], list[np.ndarray]]:
    """As make_noisy_corpus, also returning per-sentence boolean masks of
    the positions where a substitution draw happened."""
    if len(corpus) == 0:
        raise DataError("empty corpus")
    vocab, probs = substitution_distribution(corpus)
    rng = np.random.default_rng(cfg.seed)
    noisy: list[list[str]] = []
    masks: list[np.ndarray] = []
    for sent in corpus:
        n = len(sent)
        mask = rng.random(n) < cfg.p_noise
        out = list(sent)
        if mask.any():
            draws = rng.choice(len(vocab), size=int(mask.sum()), p=probs)
            for pos, draw in zip(np.flatnonzero(mask), draws):
                out[pos] = vocab[draw]
        noisy.append(out)
        masks.append(mask)
    return noisy, masks


# ---------------------------------------------------------------------------
# built-in n-gram language model


class NGramLM:
    """Additive-smoothing n-gram LM over a whitespace-tokenized corpus.

    Conditional probabilities are over V plus the unknown symbol, so they
    sum to one for every context. Contexts shorter than order-1 are padded
    with a sentence-start symbol; unknown tokens map to the unknown symbol
    both as events and inside contexts.
    """

    def __init__(self, order: int, smoothing_k: float):
        if order < 1:
            raise DataError(f"n-gram order must be >= 1, got {order}")
        if smoothing_k <= 0:
            raise DataError(f"smoothing constant must be > 0, got {smoothing_k}")
        self.order = order
        self.k = smoothing_k
        self.vocab: set[str] = set()
        self.context_counts: Counter = Counter()
        self.ngram_counts: Counter = Counter()

    @property
    def n_events(self) -> int:
        return len(self.vocab) + 1  # V plus unk

    def _map_token(self, tok: str) -> str:
        return tok if tok in self.vocab else UNK

    def _contexts(self, tokens: Sequence[str]):
        padded = [BOS] * (self.order - 1) + [self._map_token(t) for t in tokens]
        for i in range(len(tokens)):
            yield tuple(padded[i : i + self.order - 1]), padded[i + self.order - 1]

    def fit(self, corpus: Sequence[Sequence[str]]) -> "NGramLM":
        if len(corpus) == 0:
            raise DataError("empty corpus")
        for sent in corpus:
            self.vocab.update(sent)
        for sent in corpus:
            for ctx, tok in self._contexts(sent):
                self.context_counts[ctx] += 1
                self.ngram_counts[(ctx, tok)] += 1
        return self

    def logprob(self, context: tuple[str, ...], token: str) -> float:
        token = self._map_token(token)
        context = tuple(self._map_token(t) if t != BOS else t for t in context)
        num = self.ngram_counts.get((context, token), 0) + self.k
        den = self.context_counts.get(context, 0) + self.k * self.n_events
        return float(np.log(num) - np.log(den))

    def logprobs(self, tokens: Sequence[str]) -> list[float]:
        """Natural-log probability for every token position."""
        if len(tokens) == 0:
            raise DataError("cannot score an empty token sequence")
        return [self.logprob(ctx, tok) for ctx, tok in self._contexts(tokens)]


class UniformLM:
    """Background LM assigning 1/vocab_size to every token."""

    def __init__(self, vocab_size: int):
        if vocab_size < 1:
            raise DataError("uniform LM needs vocab_size >= 1")
        self.vocab_size = vocab_size
        self._lp = float(-np.log(vocab_size))

    def logprobs(self, tokens: Sequence[str]) -> list[float]:
        if len(tokens) == 0:
            raise DataError("cannot score an empty token sequence")
        return [self._lp] * len(tokens)


def train_ngram_lm(
    corpus: Sequence[Sequence[str]], order: int = 2, smoothing_k: float = 1.0
) -> NGramLM:
    return NGramLM(order, smoothing_k).fit(corpus)


def lm_logprobs(lm: NGramLM | UniformLM, tokens: Sequence[str]) -> list[float]:
    return lm.logprobs(tokens)


def tokenize(text: str) -> list[str]:
    """Whitespace tokenization used by the built-in LM."""
    return text.split()


# ---------------------------------------------------------------------------
# LR_ws pipeline


def score_lr_ws(
    dataset: Dataset,
    cfg: NoiseConfig,
    order: int = 2,
    smoothing_k: float = 1.0,
    eval_splits: tuple[str, ...] = ("valid", "test"),
) -> list[OODScore]:
    """Train the in-domain LM on the train split and the background LM on a
    noised copy of it; emit negated log LR per eval record."""
    train_corpus = [
        tokenize(rec.text) for rec in dataset if rec.split == "train"
    ]
    if not train_corpus:
        raise DataError("train split is empty")
    lm_id = train_ngram_lm(train_corpus, order, smoothing_k)
    noisy = make_noisy_corpus(train_corpus, cfg)
    lm_bg = train_ngram_lm(noisy, order, smoothing_k)

    scores: list[OODScore] = []
    for rec in dataset:
        if rec.split not in eval_splits:
            continue
        tokens = tokenize(rec.text)
        if not tokens:
            raise DataError(f"record {rec.id!r} has no tokens")
        log_lr = score_lr(lm_id.logprobs(tokens), lm_bg.logprobs(tokens))
        scores.append(to_ood_score(rec.id, log_lr))
    return scores


# ---------------------------------------------------------------------------
# length correlation analysis


def length_correlation(
    values: Sequence[float], lengths: Sequence[int]
) -> tuple[float, float]:
    """Pearson r between score values and sentence lengths, with the
    two-sided p-value of t = r sqrt((n-2)/(1-r^2)) under Student-t with
    n-2 degrees of freedom (via the regularized incomplete beta)."""
    x = np.asarray(values, dtype=np.float64)
    y = np.asarray(lengths, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError("values and lengths must be 1-D and equally long")
    n = x.size
    if n < 3:
        raise DataError(f"need at least 3 points, got {n}")
    xc = x - x.mean()
    yc = y - y.mean()
    vx = float(xc @ xc)
    vy = float(yc @ yc)
    if vx == 0.0 or vy == 0.0:
        raise DataError("zero variance in one of the arrays")
    r = float(xc @ yc) / np.sqrt(vx * vy)
    r = float(np.clip(r, -1.0, 1.0))
    df = n - 2
    if abs(r) == 1.0:
        return r, 0.0
    t2 = r * r * df / (1.0 - r * r)
    # two-sided tail of Student-t: I_{df/(df+t^2)}(df/2, 1/2)
    p = float(special.betainc(df / 2.0, 0.5, df / (df + t2)))
    return r, p
