"""Acceptance gate: one test per release criterion, each printing a
single ``[PASS]``/``[FAIL]`` line with the measured quantity.

Run with ``pytest tests/test_acceptance.py -s`` (or plain pytest; the
lines bypass capture) to see the checklist.
"""
from __future__ import annotations

import json
import math
import time
from collections import Counter

import numpy as np
import pytest
from scipy.stats import rankdata

from oodkit.cli import main as cli_main
from oodkit.datamodel import save_dataset, save_embeddings
from oodkit.density import fit_gmm
from oodkit.likelihood import (
    NoiseConfig,
    UniformLM,
    make_noisy_corpus_with_mask,
    score_ln,
    score_lr,
    score_nlr,
)
from oodkit.metrics import ScoredSet, aupr_ood, auroc, fpr_at_tpr
from oodkit.pipeline import run_pipeline
from oodkit.replearn import (
    TrainConfig,
    cluster_loss,
    contrastive_loss,
    init_state,
    sample_dropout_mask,
    soft_assign,
    target_distribution,
)
from oodkit.synthetic import make_synthetic_benchmark
from .test_metrics import brute_force_auroc, random_scored_set
from .test_replearn import fd_check


def emit(capsys, name: str, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


# ---------------------------------------------------------------------------
# detection metrics


def test_rank_auroc_matches_pairwise_oracle(capsys):
    name = "rank AUROC equals pairwise comparison on 200 random score sets"
    rng = np.random.default_rng(20240)
    started = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        scored = random_scored_set(rng)
        worst = max(worst, abs(auroc(scored) - brute_force_auroc(scored)))
    elapsed = time.perf_counter() - started
    ok = worst <= 1e-12 and elapsed < 5.0
    emit(capsys, name, ok, f"max |difference| = {worst:.3e}, {elapsed:.2f}s")
    assert ok, f"max delta {worst}, elapsed {elapsed}"


def test_metric_fixed_points(capsys):
    name = "metric values at perfect separation and at all-tied scores"
    perfect = ScoredSet.from_arrays(np.arange(10.0) + 100.0, np.arange(40.0))
    tied = ScoredSet.from_arrays(np.ones(5), np.ones(15))
    checks = [
        auroc(perfect) == 1.0,
        aupr_ood(perfect) == 1.0,
        fpr_at_tpr(perfect, 0.95) == 0.0,
        auroc(tied) == 0.5,
        aupr_ood(tied) == 0.25,  # prevalence: 5 of 20
        fpr_at_tpr(tied, 0.95) == 1.0,
    ]
    ok = all(checks)
    emit(capsys, name, ok, f"{sum(checks)}/6 exact equalities hold")
    assert ok, checks


# ---------------------------------------------------------------------------
# training objective


def test_gradients_match_finite_differences_on_random_instances(capsys):
    name = "analytic gradients match central differences on 50 random instances"
    rng = np.random.default_rng(77)
    variants = [dict(), dict(cl_loss_on=False), dict(cluster_loss_on=False)]
    started = time.perf_counter()
    worst = 0.0
    for trial in range(50):
        dims = dict(
            hidden_dim=int(rng.integers(2, 17)),
            out_dim=int(rng.integers(2, 17)),
            proj_hidden_dim=int(rng.integers(2, 17)),
            proj_dim=int(rng.integers(2, 17)),
        )
        cfg = TrainConfig(
            k=int(rng.integers(2, 5)),
            batch_size=4,
            seed=0,
            **dims,
            **variants[trial % 3],
        )
        base_dim = int(rng.integers(2, 17))
        m = int(rng.integers(2, 9))
        state = init_state(base_dim, cfg, np.random.default_rng(trial))
        state.centroids[:] = rng.normal(size=state.centroids.shape)
        x = rng.normal(size=(m, base_dim)) * 2.0
        m0 = sample_dropout_mask(rng, (m, state.head.hidden_dim), cfg.dropout)
        m1 = sample_dropout_mask(rng, (m, state.head.hidden_dim), cfg.dropout)
        worst = max(worst, fd_check(state, cfg, x, m0, m1, probes=2))
    elapsed = time.perf_counter() - started
    ok = worst <= 1e-5 and elapsed < 30.0
    emit(capsys, name, ok, f"max relative error = {worst:.3e}, {elapsed:.2f}s")
    assert ok, f"worst {worst}, elapsed {elapsed}"


def test_assignment_distribution_invariants(capsys):
    name = "assignment/target rows are distributions, single-row identity, KL sign"
    rng = np.random.default_rng(3)
    row_sum_err = 0.0
    for _ in range(20):
        m, k, d = int(rng.integers(2, 12)), int(rng.integers(2, 6)), int(rng.integers(2, 9))
        z = rng.normal(size=(m, d)) * 3.0
        mu = rng.normal(size=(k, d)) * 3.0
        q = soft_assign(z, mu)
        p = target_distribution(q)
        row_sum_err = max(
            row_sum_err,
            float(np.abs(q.sum(axis=1) - 1.0).max()),
            float(np.abs(p.sum(axis=1) - 1.0).max()),
        )
    single_q = soft_assign(rng.normal(size=(1, 4)), rng.normal(size=(3, 4)))
    single_identity = np.array_equal(target_distribution(single_q), single_q)

    q = soft_assign(rng.normal(size=(6, 4)), rng.normal(size=(3, 4)))
    p = target_distribution(q)
    kl_nonneg = cluster_loss(p, q) >= 0.0
    kl_zero_at_equal = cluster_loss(q.copy(), q) <= 1e-12
    kl_positive_when_distinct = cluster_loss(p, q) > 1e-12  # here p != q

    ok = (
        row_sum_err <= 1e-12
        and single_identity
        and kl_nonneg
        and kl_zero_at_equal
        and kl_positive_when_distinct
    )
    emit(
        capsys,
        name,
        ok,
        f"max row-sum error = {row_sum_err:.3e}; single-row target == assignment: "
        f"{single_identity}; KL>=0 with equality only at equality: "
        f"{kl_nonneg and kl_zero_at_equal and kl_positive_when_distinct}",
    )
    assert ok


def test_objective_hand_values(capsys):
    name = "hand-computed sharpened-target and contrastive-loss values"
    target = target_distribution(np.array([[0.9, 0.1], [0.5, 0.5]]))
    expected_target = np.array([[0.972, 0.028], [0.3, 0.7]])
    target_err = float(np.abs(target - expected_target).max())

    z = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    loss = contrastive_loss(z, tau=0.5)
    expected_loss = math.log(1.0 + 2.0 * math.exp(-2.0))
    loss_err = abs(loss - expected_loss)

    ok = target_err <= 1e-9 and loss_err <= 1e-9
    emit(
        capsys,
        name,
        ok,
        f"target error = {target_err:.3e}, contrastive error = {loss_err:.3e}",
    )
    assert ok, (target_err, loss_err)


# ---------------------------------------------------------------------------
# density model


def test_em_monotone_and_single_component_closed_form(capsys):
    name = "EM log-likelihood never decreases; single-component fit is closed-form"
    worst_drop = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        x = np.vstack(
            [rng.normal(loc=-3.0, size=(60, 3)), rng.normal(loc=3.0, size=(40, 3))]
        )
        model = fit_gmm(x, n_components=2, seed=seed)
        if len(model.fit_log) > 1:
            worst_drop = min(worst_drop, float(np.diff(model.fit_log).min()))

    rng = np.random.default_rng(99)
    x = rng.normal(size=(50, 4)) * 1.7 + 0.3
    single = fit_gmm(x, n_components=1, seed=0, variance_floor=1e-6)
    mean_err = float(np.abs(single.means[0] - x.mean(axis=0)).max())
    var_err = float(
        np.abs(single.variances[0] - np.maximum(x.var(axis=0), 1e-6)).max()
    )

    ok = worst_drop >= -1e-9 and mean_err <= 1e-10 and var_err <= 1e-10
    emit(
        capsys,
        name,
        ok,
        f"worst step = {worst_drop:.3e}; closed-form errors mean {mean_err:.1e} "
        f"var {var_err:.1e}",
    )
    assert ok, (worst_drop, mean_err, var_err)


# ---------------------------------------------------------------------------
# likelihood scores


def test_likelihood_identities(capsys):
    name = "ratio scores vanish on identical streams; ranks match under uniform background"
    rng = np.random.default_rng(5)
    stream = list(-rng.exponential(1.0, size=12))
    lr_zero = score_lr(stream, stream) == 0.0
    nlr_zero = score_nlr(stream, stream) == 0.0

    constant = [math.log(0.25)] * 9
    ln_exact = abs(score_ln(constant) - math.log(0.25)) <= 1e-12

    streams = [
        list(-rng.exponential(1.0, size=int(rng.integers(3, 40)))) for _ in range(30)
    ]
    background = UniformLM(50)
    ln_scores = np.array([-score_ln(s) for s in streams])
    nlr_scores = np.array(
        [-score_nlr(s, background.logprobs(["w"] * len(s))) for s in streams]
    )
    ranks_equal = np.array_equal(rankdata(ln_scores), rankdata(nlr_scores))

    ok = lr_zero and nlr_zero and ln_exact and ranks_equal
    emit(
        capsys,
        name,
        ok,
        f"LR=0: {lr_zero}, NLR=0: {nlr_zero}, constant-sequence LN exact: "
        f"{ln_exact}, rank agreement: {ranks_equal}",
    )
    assert ok


def test_noise_generator_statistics(capsys):
    name = "substitution rate and sqrt-frequency law over 220k tokens"
    repeat = 4000
    tokens: list[str] = []
    for i in range(10):
        tokens.extend([f"w{i}"] * ((i + 1) * repeat))
    rng = np.random.default_rng(0)
    rng.shuffle(tokens)
    corpus = [tokens[j : j + 100] for j in range(0, len(tokens), 100)]

    noisy, masks = make_noisy_corpus_with_mask(corpus, NoiseConfig(0.5, seed=9))
    flat_mask = np.concatenate(masks)
    rate = float(flat_mask.mean())
    rate_ok = abs(rate - 0.5) <= 0.01

    replacements = Counter(
        tok
        for sent, mask in zip(noisy, masks)
        for tok, flag in zip(sent, mask)
        if flag
    )
    drawn = sum(replacements.values())
    # the expected law, recomputed from scratch: sqrt of corpus frequency
    freq = Counter(tokens)
    weights = {w: math.sqrt(c) for w, c in freq.items()}
    total_weight = sum(weights.values())
    tv = 0.5 * sum(
        abs(replacements[w] / drawn - weights[w] / total_weight) for w in freq
    )
    tv_ok = tv <= 0.01

    ok = rate_ok and tv_ok and len(tokens) >= 100_000
    emit(
        capsys,
        name,
        ok,
        f"rate = {rate:.4f} (target 0.5±0.01), total variation = {tv:.4f} "
        f"(bar 0.01), {len(tokens)} tokens",
    )
    assert ok, (rate, tv)


# ---------------------------------------------------------------------------
# synthetic benchmark: adaptation quality, ablations, runtime


@pytest.fixture(scope="module")
def benchmark_runs():
    started = time.perf_counter()
    aurocs: dict[str, list[float]] = {
        "full": [],
        "baseline": [],
        "cluster_only": [],
        "contrastive_only": [],
    }
    for seed in range(5):
        dataset, embeddings = make_synthetic_benchmark(seed=seed)
        aurocs["full"].append(
            run_pipeline(dataset, embeddings, TrainConfig(k=4, gamma=1.0)).test_report.auroc
        )
        aurocs["baseline"].append(
            run_pipeline(
                dataset, embeddings, TrainConfig(k=4, gamma=1.0), adapt=False
            ).test_report.auroc
        )
        aurocs["cluster_only"].append(
            run_pipeline(
                dataset, embeddings, TrainConfig(k=4, cl_loss_on=False)
            ).test_report.auroc
        )
        aurocs["contrastive_only"].append(
            run_pipeline(
                dataset, embeddings, TrainConfig(k=4, cluster_loss_on=False)
            ).test_report.auroc
        )
    elapsed = time.perf_counter() - started
    return aurocs, elapsed


def test_adapted_pipeline_beats_raw_baseline(capsys, benchmark_runs):
    name = "adapted pipeline beats the raw-embedding baseline on the synthetic benchmark"
    aurocs, elapsed = benchmark_runs
    full = float(np.median(aurocs["full"]))
    baseline = float(np.median(aurocs["baseline"]))
    ok = full >= 0.95 and (full - baseline) >= 0.02 and elapsed < 60.0
    emit(
        capsys,
        name,
        ok,
        f"median AUROC {full:.4f} (bar 0.95), margin over baseline "
        f"{full - baseline:+.4f} (bar +0.02), 5 seeds in {elapsed:.1f}s (bar 60s)",
    )
    assert ok, (full, baseline, elapsed)


def test_joint_objective_matches_or_beats_each_ablation(capsys, benchmark_runs):
    name = "joint objective at least matches each single-objective ablation"
    aurocs, _ = benchmark_runs
    full = float(np.median(aurocs["full"]))
    cluster_only = float(np.median(aurocs["cluster_only"]))
    contrastive_only = float(np.median(aurocs["contrastive_only"]))
    ok = full >= cluster_only and full >= contrastive_only
    emit(
        capsys,
        name,
        ok,
        f"full {full:.4f} vs clustering-only {cluster_only:.4f} and "
        f"contrastive-only {contrastive_only:.4f}",
    )
    assert ok, (full, cluster_only, contrastive_only)


# ---------------------------------------------------------------------------
# determinism


def test_identical_runs_reproduce_byte_identical_artifacts(
    capsys, tmp_path, monkeypatch
):
    name = "identical config and seed reproduce byte-identical artifacts"
    dataset, embeddings = make_synthetic_benchmark(seed=3, n_per_cluster=50, dim=8)
    data_path = str(tmp_path / "bench.jsonl")
    emb_path = str(tmp_path / "bench.emb")
    save_dataset(dataset, data_path)
    save_embeddings(embeddings, emb_path)
    args = [
        "pipeline", "--dataset", data_path, "--embeddings", emb_path,
        "--protocol", "preset", "--k", "4", "--epochs", "3", "--seed", "0",
        "--out-dir", "out",
    ]
    for sub in ("a", "b"):
        (tmp_path / sub).mkdir()
        monkeypatch.chdir(tmp_path / sub)
        assert cli_main(list(args)) == 0
    artifacts = [
        "report.json",
        "manifest-pipeline.json",
        "split-0/report.json",
        "split-0/scores.jsonl",
        "split-0/model.bundle",
        "split-0/dataset.jsonl",
    ]
    differing = [
        rel
        for rel in artifacts
        if (tmp_path / "a" / "out" / rel).read_bytes()
        != (tmp_path / "b" / "out" / rel).read_bytes()
    ]
    ok = not differing
    emit(
        capsys,
        name,
        ok,
        f"{len(artifacts) - len(differing)}/{len(artifacts)} artifacts identical"
        + (f"; differing: {differing}" if differing else ""),
    )
    assert ok, differing

    report = json.loads((tmp_path / "a" / "out" / "report.json").read_text())
    assert report["n_splits"] == 1
