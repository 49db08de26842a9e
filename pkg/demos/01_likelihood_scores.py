"""
Scoring text with n-gram language-model likelihoods
====================================================

An out-of-domain (OOD) sentence should look *unlikely* under a language
model trained on in-domain text. This demo trains a tiny bigram model,
then compares three likelihood scores on held-out sentences:

* LN   -- length-normalised log-likelihood under the in-domain model
* LR   -- log-likelihood ratio against a background model
* NLR  -- the length-normalised ratio

Higher returned score = more out-of-domain, for every scorer.
"""

import numpy as np

from oodkit import (
    Dataset,
    NoiseConfig,
    Record,
    UniformLM,
    length_correlation,
    make_noisy_corpus,
    score_ln,
    score_lr,
    score_lr_ws,
    score_nlr,
    to_ood_score,
    tokenize,
    train_ngram_lm,
)

# ---------------------------------------------------------------------------
# a miniature in-domain corpus: banking requests
train_sentences = [
    "please transfer money to my savings account",
    "what is the balance of my checking account",
    "transfer money from checking to savings",
    "show my recent account transactions please",
    "what is my savings account balance",
    "send money to my checking account",
]
train_corpus = [tokenize(s) for s in train_sentences]

# train a bigram model with add-one smoothing
lm_id = train_ngram_lm(train_corpus, order=2, smoothing_k=1.0)
print(f"in-domain bigram model over {lm_id.n_events - 1} word types")

# ---------------------------------------------------------------------------
# two backgrounds: a uniform model, and a bigram model over a noised copy
# of the training corpus (word substitutions drawn by the sqrt-frequency law)
lm_uniform = UniformLM(lm_id.n_events)
noisy_corpus = make_noisy_corpus(train_corpus, NoiseConfig(p_noise=0.5, seed=0))
lm_noisy = train_ngram_lm(noisy_corpus, order=2, smoothing_k=1.0)
print("sample noised sentence:", " ".join(noisy_corpus[0]))

# ---------------------------------------------------------------------------
# score one in-domain and one out-of-domain sentence
eval_sentences = {
    "id": "please show my savings account balance",
    "ood": "the weather forecast predicts heavy mountain snow",
}

print(f"\n{'sentence':>8s} {'LN':>8s} {'LR':>8s} {'NLR':>8s}")
for kind, sentence in eval_sentences.items():
    tokens = tokenize(sentence)
    lp_id = lm_id.logprobs(tokens)
    lp_bg = lm_noisy.logprobs(tokens)
    scores = [
        to_ood_score(kind, score_ln(lp_id)),
        to_ood_score(kind, score_lr(lp_id, lp_bg)),
        to_ood_score(kind, score_nlr(lp_id, lp_bg)),
    ]
    print(f"{kind:>8s} " + " ".join(f"{s.value:8.3f}" for s in scores))

# the out-of-domain sentence gets the larger score under every method
tokens_id = tokenize(eval_sentences["id"])
tokens_ood = tokenize(eval_sentences["ood"])
assert -score_ln(lm_id.logprobs(tokens_ood)) > -score_ln(lm_id.logprobs(tokens_id))
print("\nthe out-of-domain sentence scores higher (more OOD) than the in-domain one")

# ---------------------------------------------------------------------------
# against a uniform background, NLR is just a shifted LN: identical rankings
pool = [tokenize(s) for s in train_sentences] + [tokens_id, tokens_ood]
ln_rank = np.argsort([-score_ln(lm_id.logprobs(t)) for t in pool])
nlr_rank = np.argsort(
    [-score_nlr(lm_id.logprobs(t), lm_uniform.logprobs(t)) for t in pool]
)
assert np.array_equal(ln_rank, nlr_rank)
print("uniform-background NLR ranks sentences exactly like LN")

# ---------------------------------------------------------------------------
# the one-call weakly-supervised variant wires the whole recipe together:
# in-domain LM on the train split, background LM on its noised copy
dataset = Dataset(
    [Record(id=f"train-{i}", text=s, split="train") for i, s in enumerate(train_sentences)]
    + [Record(id=kind, text=s, split="test") for kind, s in eval_sentences.items()]
)
ws_scores = {s.id: s.value for s in score_lr_ws(dataset, NoiseConfig(0.5, seed=0))}
assert ws_scores["ood"] > ws_scores["id"]
print(f"weakly-supervised ratio: id {ws_scores['id']:+.3f} vs "
      f"ood {ws_scores['ood']:+.3f}")

# ---------------------------------------------------------------------------
# a diagnostic: is a score merely tracking sentence length? Pearson r with
# a Student-t p-value over the evaluation pool
values = [-score_ln(lm_id.logprobs(t)) for t in pool]
r, p = length_correlation(values, [len(t) for t in pool])
print(f"LN-score vs length: r = {r:+.3f} (p = {p:.3f})")
