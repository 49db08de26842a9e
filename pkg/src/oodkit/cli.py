"""Command-line entry point: one executable, one subcommand per stage.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Every run drops a ``manifest-<command>.json`` (config snapshot, seed and
artifact digests) into the output directory; reruns with the same config
and seed reproduce outputs byte for byte.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import fields

import numpy as np

from ._version import __version__
from .config import RunConfig, load_config
from .datamodel import (
    Dataset,
    EmbeddingSet,
    ModelBundle,
    load_dataset,
    load_embeddings,
    load_logprobs,
    load_model,
    load_scores,
    save_dataset,
    save_model,
    save_scores,
)
from .density import GmmModel, fit_gmm, log_density
from .errors import DataError, NumericError, OodkitError, UsageError
from .likelihood import (
    NoiseConfig,
    OODScore,
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
from .metrics import aggregate_splits, calibrate_threshold, evaluate, pca2d_project, sweep
from .pipeline import run_pipeline, scored_set_for_split
from .replearn import EncoderState, TrainConfig, train
from .service import ProviderConfig, serve
from .splits import make_split_family

_EVAL_SPLITS = ("valid", "test")


# ---------------------------------------------------------------------------
# shared helpers


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json(path: str, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _write_manifest(
    command: str,
    cfg: RunConfig,
    seed: int,
    inputs: dict[str, str | None],
    outputs: list[str],
) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    manifest = {
        "tool": "oodkit",
        "version": __version__,
        "command": command,
        "seed": seed,
        "config": cfg.to_dict(),
        "inputs": {p: _sha256(p) for p in sorted(k for k, v in inputs.items() if k)},
        "outputs": {p: _sha256(p) for p in sorted(outputs)},
    }
    path = os.path.join(cfg.out_dir, f"manifest-{command}.json")
    _write_json(path, manifest)
    return path


def _provenance(command: str, seed: int, inputs: dict[str, str | None]) -> dict:
    return {
        "tool": "oodkit",
        "version": __version__,
        "command": command,
        "seed": seed,
        "inputs": {p: _sha256(p) for p in sorted(k for k, v in inputs.items() if k)},
    }


def _overrides_from(args: argparse.Namespace) -> dict:
    names = {f.name for f in fields(RunConfig)}
    return {k: v for k, v in vars(args).items() if k in names and v is not None}


def _merged_config(args: argparse.Namespace) -> RunConfig:
    return load_config(getattr(args, "config", None), _overrides_from(args))


def _require(value, flag: str):
    if value is None:
        raise UsageError(f"missing required flag {flag}")
    return value


def _train_config(cfg: RunConfig, seed: int, **overrides) -> TrainConfig:
    base = dict(
        k=cfg.k,
        gamma=cfg.gamma,
        tau=cfg.tau,
        alpha=cfg.alpha,
        batch_size=cfg.batch_size,
        epochs=cfg.epochs,
        learning_rate=cfg.learning_rate,
        seed=seed,
        cluster_loss_on=cfg.cluster_loss_on,
        cl_loss_on=cfg.cl_loss_on,
        dropout=cfg.dropout,
        hidden_dim=cfg.hidden_dim,
        out_dim=cfg.out_dim,
        proj_hidden_dim=cfg.proj_hidden_dim,
        proj_dim=cfg.proj_dim,
        optimizer=cfg.optimizer,
        deterministic_q=cfg.deterministic_q,
    )
    base.update(overrides)
    return TrainConfig(**base)


def _config_snapshot(cfg: RunConfig, seed: int) -> dict:
    # Bundles built here all belong to the embedding/density route; the
    # run config's `method` field describes lm-score runs and would
    # otherwise leak its "ln" default into served bundles, letting the
    # service accept log-prob requests against a density threshold.
    snap = cfg.to_dict()
    snap["seed"] = seed
    snap["method"] = "gmm"
    return snap


def _split_records(dataset: Dataset, split: str) -> list:
    records = list(dataset.subset(split))
    if not records:
        raise DataError(f"dataset has no {split!r} records")
    return records


def _encoder_from_bundle(bundle: ModelBundle) -> EncoderState | None:
    if bundle.encoder_state is None:
        return None
    return EncoderState.from_dict(bundle.encoder_state)


def _adapted_vectors(encoder: EncoderState | None, emb: EmbeddingSet) -> np.ndarray:
    return encoder.embed(emb.vectors) if encoder is not None else emb.vectors


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_split(args: argparse.Namespace) -> int:
    cfg = _merged_config(args)
    seed = cfg.resolved_seed()
    path = _require(cfg.dataset_path, "--in")
    dataset = load_dataset(path)
    os.makedirs(cfg.out_dir, exist_ok=True)
    family = make_split_family(
        dataset,
        cfg.protocol,
        cfg.n_splits,
        seed,
        coverage=cfg.coverage,
        n_ood_classes=cfg.n_ood_classes,
    )
    outputs = []
    spec_docs = []
    for i, (spec, split_dataset) in enumerate(family):
        out_path = os.path.join(cfg.out_dir, f"split-{i}.jsonl")
        save_dataset(split_dataset, out_path)
        outputs.append(out_path)
        spec_docs.append(spec.to_dict())
    specs_path = os.path.join(cfg.out_dir, "splits.json")
    _write_json(specs_path, {"protocol": cfg.protocol, "base_seed": seed, "splits": spec_docs})
    outputs.append(specs_path)
    _write_manifest("split", cfg, seed, {path: None}, outputs)
    print(f"wrote {len(family)} split(s) under {cfg.out_dir}")
    return 0


def _scores_from_logprob_files(args: argparse.Namespace, method: str) -> list[OODScore]:
    id_lps = load_logprobs(args.id_logprobs)
    if method == "ln":
        return [to_ood_score(rid, score_ln(vals)) for rid, vals in id_lps.rows]
    if args.bg_logprobs is None:
        raise UsageError(f"method {method} needs --bg-logprobs")
    bg_lps = load_logprobs(args.bg_logprobs)
    bg_map = dict(bg_lps.rows)
    scorer = score_lr if method == "lr" else score_nlr
    out = []
    for rid, vals in id_lps.rows:
        if rid not in bg_map:
            raise DataError(f"id {rid!r} missing from background log-probs")
        out.append(to_ood_score(rid, scorer(vals, bg_map[rid])))
    return out


def _scores_from_corpus(
    args: argparse.Namespace, cfg: RunConfig, seed: int, method: str
) -> list[OODScore]:
    dataset = load_dataset(cfg.dataset_path)
    eval_splits = tuple(s.strip() for s in (args.splits or "valid,test").split(","))
    if method == "lr-ws":
        return score_lr_ws(
            dataset,
            NoiseConfig(cfg.p_noise, seed),
            cfg.ngram_order,
            cfg.smoothing_k,
            eval_splits,
        )
    train_corpus = [tokenize(rec.text) for rec in dataset if rec.split == "train"]
    if not train_corpus:
        raise DataError("train split is empty")
    lm_id = train_ngram_lm(train_corpus, cfg.ngram_order, cfg.smoothing_k)

    lm_bg = None
    if method in ("lr", "nlr"):
        bg = args.bg or "noisy"
        if bg == "uniform":
            lm_bg = UniformLM(lm_id.n_events)
        elif bg == "noisy":
            noisy = make_noisy_corpus(train_corpus, NoiseConfig(cfg.p_noise, seed))
            lm_bg = train_ngram_lm(noisy, cfg.ngram_order, cfg.smoothing_k)
        elif bg.startswith("corpus:"):
            bg_path = bg.split(":", 1)[1]
            with open(bg_path, "r", encoding="utf-8") as fh:
                bg_corpus = [tokenize(line) for line in fh if line.strip()]
            lm_bg = train_ngram_lm(bg_corpus, cfg.ngram_order, cfg.smoothing_k)
        else:
            raise UsageError(f"--bg must be uniform, noisy or corpus:PATH, got {bg!r}")

    out = []
    for rec in dataset:
        if rec.split not in eval_splits:
            continue
        tokens = tokenize(rec.text)
        if not tokens:
            raise DataError(f"record {rec.id!r} has no tokens")
        lp_id = lm_id.logprobs(tokens)
        if method == "ln":
            out.append(to_ood_score(rec.id, score_ln(lp_id)))
        else:
            scorer = score_lr if method == "lr" else score_nlr
            out.append(to_ood_score(rec.id, scorer(lp_id, lm_bg.logprobs(tokens))))
    return out


def _cmd_lm_score(args: argparse.Namespace) -> int:
    cfg = _merged_config(args)
    seed = cfg.resolved_seed()
    method = cfg.method
    if method not in ("ln", "lr", "nlr", "lr-ws"):
        raise UsageError(f"--method must be ln, lr, nlr or lr-ws, got {method!r}")
    out = _require(args.out, "--out")

    if args.id_logprobs is not None:
        if method == "lr-ws":
            raise UsageError("lr-ws trains its own LMs; use --dataset, not log-prob files")
        scores = _scores_from_logprob_files(args, method)
        inputs = {args.id_logprobs: None, args.bg_logprobs: None}
    else:
        _require(cfg.dataset_path, "--dataset (or --id-logprobs)")
        scores = _scores_from_corpus(args, cfg, seed, method)
        inputs = {cfg.dataset_path: None}
    if not scores:
        raise DataError("no records matched the requested evaluation splits")

    os.makedirs(cfg.out_dir, exist_ok=True)
    save_scores(out, [s.id for s in scores], [s.value for s in scores])
    _write_manifest("lm-score", cfg, seed, inputs, [out])
    print(f"scored {len(scores)} records with method {method}")
    return 0


def _cmd_noise_corpus(args: argparse.Namespace) -> int:
    cfg = _merged_config(args)
    seed = cfg.resolved_seed()
    path = _require(cfg.dataset_path, "--in")
    out = _require(args.out, "--out")
    dataset = load_dataset(path)
    split = args.split or "train"
    corpus = [tokenize(rec.text) for rec in dataset if rec.split == split]
    if not corpus:
        raise DataError(f"dataset has no {split!r} records")
    noisy = make_noisy_corpus(corpus, NoiseConfig(cfg.p_noise, seed))
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        for sent in noisy:
            fh.write(" ".join(sent) + "\n")
    _write_manifest("noise-corpus", cfg, seed, {path: None}, [out])
    print(f"noised {len(noisy)} {split} sentences (p_noise={cfg.p_noise})")
    return 0


def _cmd_corr_length(args: argparse.Namespace) -> int:
    cfg = _merged_config(args)
    seed = cfg.resolved_seed()
    scores_path = _require(args.scores, "--scores")
    dataset_path = _require(cfg.dataset_path, "--dataset")
    ids, values, _ = load_scores(scores_path)
    dataset = load_dataset(dataset_path)
    text_by_id = {rec.id: rec.text for rec in dataset}
    lengths = []
    for rec_id in ids:
        if rec_id not in text_by_id:
            raise DataError(f"scored id {rec_id!r} not present in dataset")
        lengths.append(len(tokenize(text_by_id[rec_id])))
    r, p = length_correlation(values, lengths)
    print(f"pearson_r={r:.6f} p_value={p:.6g} n={len(ids)}")
    outputs = []
    if args.out:
        _write_json(args.out, {"pearson_r": r, "p_value": p, "n": len(ids)})
        outputs.append(args.out)
    _write_manifest(
        "corr-length", cfg, seed, {scores_path: None, dataset_path: None}, outputs
    )
    return 0


def _cmd_train_rep(args: argparse.Namespace) -> int:
    cfg = _merged_config(args)
    seed = cfg.resolved_seed()
    emb_path = _require(cfg.embeddings_path, "--embeddings")
    data_path = _require(cfg.dataset_path, "--dataset")
    out = _require(args.out, "--out")
    dataset = load_dataset(data_path)
    embeddings = load_embeddings(emb_path)
    train_ids = tuple(rec.id for rec in _split_records(dataset, "train"))
    state = train(embeddings.select(train_ids), _train_config(cfg, seed))
    bundle = ModelBundle(
        encoder_state=state.to_dict(),
        gmm=None,
        threshold=None,
        config=_config_snapshot(cfg, seed),
        provenance=_provenance(
            "train-rep", seed, {emb_path: None, data_path: None}
        ),
    )
    os.makedirs(cfg.out_dir, exist_ok=True)
    save_model(bundle, out)
    _write_manifest("train-rep", cfg, seed, {emb_path: None, data_path: None}, [out])
    final_loss = state.loss_trace[-1] if state.loss_trace else float("nan")
    print(
        f"trained representation head: k={cfg.k} gamma={cfg.gamma} "
        f"epochs={cfg.epochs} final_batch_loss={final_loss:.6f}"
    )
    return 0


def _cmd_fit_density(args: argparse.Namespace) -> int:
    cfg = _merged_config(args)
    seed = cfg.resolved_seed()
    emb_path = _require(cfg.embeddings_path, "--embeddings")
    out = _require(args.model_out, "--model-out")
    embeddings = load_embeddings(emb_path)

    encoder = None
    encoder_state_doc = None
    threshold = None
    if args.model_in is not None:
        bundle_in = load_model(args.model_in)
        encoder = _encoder_from_bundle(bundle_in)
        encoder_state_doc = bundle_in.encoder_state
        threshold = bundle_in.threshold

    dataset = load_dataset(cfg.dataset_path) if cfg.dataset_path else None
    if dataset is not None:
        train_ids = tuple(rec.id for rec in _split_records(dataset, "train"))
        fit_emb = embeddings.select(train_ids)
    else:
        fit_emb = embeddings

    gmm = fit_gmm(
        _adapted_vectors(encoder, fit_emb),
        n_components=cfg.components,
        seed=seed,
        variance_floor=cfg.variance_floor,
    )

    if dataset is not None:
        valid_id_ids = tuple(
            rec.id for rec in dataset.subset("valid") if rec.is_ood is not True
        )
        if valid_id_ids:
            valid_vectors = _adapted_vectors(encoder, embeddings.select(valid_id_ids))
            id_scores = -log_density(gmm, valid_vectors)
            threshold = calibrate_threshold(id_scores, cfg.fpr_budget)

    inputs = {emb_path: None, args.model_in: None, cfg.dataset_path: None}
    bundle = ModelBundle(
        encoder_state=encoder_state_doc,
        gmm=gmm.to_dict(),
        threshold=threshold,
        config=_config_snapshot(cfg, seed),
        provenance=_provenance("fit-density", seed, inputs),
    )
    os.makedirs(cfg.out_dir, exist_ok=True)
    save_model(bundle, out)
    _write_manifest("fit-density", cfg, seed, inputs, [out])
    extra = f" threshold={threshold:.6f}" if threshold is not None else ""
    print(f"fit {cfg.components}-component density on {fit_emb.vectors.shape[0]} rows{extra}")
    return 0


def _cmd_score(args: argparse.Namespace) -> int:
    cfg = _merged_config(args)
    seed = cfg.resolved_seed()
    model_path = _require(args.model, "--model")
    emb_path = _require(cfg.embeddings_path, "--embeddings")
    out = _require(args.out, "--out")
    bundle = load_model(model_path)
    if bundle.gmm is None:
        raise DataError(f"{model_path}: bundle has no density model; run fit-density first")
    gmm = GmmModel.from_dict(bundle.gmm)
    encoder = _encoder_from_bundle(bundle)
    embeddings = load_embeddings(emb_path)
    values = -log_density(gmm, _adapted_vectors(encoder, embeddings))
    os.makedirs(cfg.out_dir, exist_ok=True)
    save_scores(out, embeddings.ids, values)
    _write_manifest("score", cfg, seed, {model_path: None, emb_path: None}, [out])
    print(f"scored {len(embeddings.ids)} embeddings")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    cfg = _merged_config(args)
    seed = cfg.resolved_seed()
    scores_path = _require(args.scores, "--scores")
    data_path = _require(cfg.dataset_path, "--dataset")
    out = _require(args.out, "--out")
    split = args.split or "test"
    ids, values, _ = load_scores(scores_path)
    score_by_id = dict(zip(ids, values))
    dataset = load_dataset(data_path)
    scored = scored_set_for_split(dataset, score_by_id, split)
    report = evaluate(scored, cfg.tpr_level)
    os.makedirs(cfg.out_dir, exist_ok=True)
    _write_json(out, report.to_dict())
    _write_manifest("eval", cfg, seed, {scores_path: None, data_path: None}, [out])
    print(f"split={split} n_id={report.n_id} n_ood={report.n_ood}")
    for name in ("auroc", "aupr_ood", "fpr_at_tpr"):
        print(f"{name} {getattr(report, name):.6f}")
    return 0


def _parse_csv(text: str, cast, flag: str) -> list:
    try:
        values = [cast(part.strip()) for part in text.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"{flag} expects a comma-separated list, got {text!r}")
    if not values:
        raise UsageError(f"{flag} expects a nonempty comma-separated list")
    return values


def _cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _merged_config(args)
    seed = cfg.resolved_seed()
    emb_path = _require(cfg.embeddings_path, "--embeddings")
    data_path = _require(cfg.dataset_path, "--dataset")
    out = _require(args.out, "--out")
    k_values = _parse_csv(args.k_list, int, "--k") if args.k_list else [cfg.k]
    gamma_values = (
        _parse_csv(args.gamma_list, float, "--gamma") if args.gamma_list else [cfg.gamma]
    )
    dataset = load_dataset(data_path)
    embeddings = load_embeddings(emb_path)

    def scored_for(k: int, gamma: float):
        result = run_pipeline(
            dataset,
            embeddings,
            _train_config(cfg, seed, k=k, gamma=gamma),
            n_components=cfg.components,
            variance_floor=cfg.variance_floor,
            fpr_budget=cfg.fpr_budget,
            tpr_level=cfg.tpr_level,
        )
        return result.valid_scored

    report = sweep(k_values, gamma_values, scored_for, cfg.tpr_level)
    os.makedirs(cfg.out_dir, exist_ok=True)
    _write_json(out, report.to_dict())
    _write_manifest("sweep", cfg, seed, {emb_path: None, data_path: None}, [out])
    print(f"swept {len(report.entries)} grid points on the valid split")
    print(f"best: k={report.best_k} gamma={report.best_gamma}")
    return 0


def _cmd_project(args: argparse.Namespace) -> int:
    cfg = _merged_config(args)
    seed = cfg.resolved_seed()
    emb_path = _require(cfg.embeddings_path, "--embeddings")
    data_path = _require(cfg.dataset_path, "--dataset")
    out = _require(args.out, "--out")
    wanted = ("valid", "test") if (args.split or "eval") == "eval" else (args.split,)
    dataset = load_dataset(data_path)
    embeddings = load_embeddings(emb_path)
    records = [
        rec for rec in dataset if rec.split in wanted and rec.is_ood is not None
    ]
    if len(records) < 3:
        raise DataError("projection needs at least 3 flagged records")
    selected = embeddings.select(tuple(rec.id for rec in records))
    rows = pca2d_project(selected.vectors, [rec.is_ood for rec in records])
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("id,x,y,is_ood\n")
        for rec, (x, y, flag) in zip(records, rows):
            fh.write(f"{rec.id},{x!r},{y!r},{str(flag).lower()}\n")
    _write_manifest("project", cfg, seed, {emb_path: None, data_path: None}, [out])
    print(f"projected {len(rows)} embeddings to {out}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    cfg = _merged_config(args)
    seed = cfg.resolved_seed()
    model_path = _require(args.model, "--model")
    bundle = load_model(model_path)
    provider = None
    if args.provider_url is not None:
        provider = ProviderConfig(
            base_url=args.provider_url,
            timeout_ms=args.timeout_ms if args.timeout_ms is not None else 2000,
            retries=args.retries if args.retries is not None else 2,
            expected_dim=args.expected_dim,
        )
    _write_manifest("serve", cfg, seed, {model_path: None}, [])
    bind = args.bind or "127.0.0.1:8080"
    print(f"serving {model_path} on {bind}")
    serve(bundle, bind, provider)
    return 0


def _cmd_pipeline(args: argparse.Namespace) -> int:
    cfg = _merged_config(args)
    seed = cfg.resolved_seed()
    emb_path = _require(cfg.embeddings_path, "--embeddings (or embeddings_path in config)")
    data_path = _require(cfg.dataset_path, "--dataset (or dataset_path in config)")
    dataset = load_dataset(data_path)
    embeddings = load_embeddings(emb_path)
    os.makedirs(cfg.out_dir, exist_ok=True)

    if cfg.protocol == "preset":
        family = [(None, dataset)]
    else:
        family = make_split_family(
            dataset,
            cfg.protocol,
            cfg.n_splits,
            seed,
            coverage=cfg.coverage,
            n_ood_classes=cfg.n_ood_classes,
        )

    outputs: list[str] = []
    reports = []
    for i, (spec, split_dataset) in enumerate(family):
        sub = os.path.join(cfg.out_dir, f"split-{i}")
        os.makedirs(sub, exist_ok=True)
        ds_path = os.path.join(sub, "dataset.jsonl")
        save_dataset(split_dataset, ds_path)

        result = run_pipeline(
            split_dataset,
            embeddings,
            _train_config(cfg, seed + i),
            n_components=cfg.components,
            variance_floor=cfg.variance_floor,
            fpr_budget=cfg.fpr_budget,
            tpr_level=cfg.tpr_level,
        )

        bundle_path = os.path.join(sub, "model.bundle")
        snapshot = _config_snapshot(cfg, seed)
        if spec is not None:
            snapshot["split"] = spec.to_dict()
        save_model(
            result.to_bundle(
                snapshot, _provenance("pipeline", seed, {emb_path: None, data_path: None})
            ),
            bundle_path,
        )

        scores_path = os.path.join(sub, "scores.jsonl")
        merged = [
            (rec_id, score, flag)
            for scored in (result.valid_scored, result.test_scored)
            for rec_id, score, flag in zip(scored.ids, scored.scores, scored.is_ood)
        ]
        save_scores(
            scores_path,
            [m[0] for m in merged],
            [m[1] for m in merged],
            [m[2] for m in merged],
        )

        report_path = os.path.join(sub, "report.json")
        _write_json(report_path, result.test_report.to_dict())
        outputs.extend([ds_path, bundle_path, scores_path, report_path])
        reports.append(result.test_report)
        print(
            f"split {i}: test auroc={result.test_report.auroc:.6f} "
            f"aupr_ood={result.test_report.aupr_ood:.6f} "
            f"fpr_at_tpr={result.test_report.fpr_at_tpr:.6f}"
        )

    agg = aggregate_splits(reports)
    agg_path = os.path.join(cfg.out_dir, "report.json")
    _write_json(agg_path, agg.to_dict())
    outputs.append(agg_path)
    _write_manifest("pipeline", cfg, seed, {emb_path: None, data_path: None}, outputs)
    print(
        f"aggregate over {agg.n_splits} split(s): "
        f"auroc={agg.mean['auroc']:.6f}±{agg.std['auroc']:.6f} "
        f"aupr_ood={agg.mean['aupr_ood']:.6f}±{agg.std['aupr_ood']:.6f}"
    )
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", help="flat key=value config file")
    sp.add_argument("--out-dir", dest="out_dir", help="output directory")
    sp.add_argument("--seed", type=int, dest="seed", help="global seed")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oodkit",
        description="Out-of-domain text detection toolkit: splits, likelihood "
        "scores, representation learning, density scoring, evaluation, serving.",
    )
    parser.add_argument("--version", action="version", version=f"oodkit {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")

    sp = sub.add_parser("split", help="partition classes into ID/OOD and write split datasets")
    _add_common(sp)
    sp.add_argument("--in", dest="dataset_path", help="labeled dataset JSONL")
    sp.add_argument("--protocol", choices=["coverage", "fixed"], dest="protocol")
    sp.add_argument("--coverage", type=float, dest="coverage")
    sp.add_argument("--n-ood", type=int, dest="n_ood_classes")
    sp.add_argument("--n-splits", type=int, dest="n_splits")

    sp = sub.add_parser("lm-score", help="n-gram likelihood OOD scores (ln, lr, nlr, lr-ws)")
    _add_common(sp)
    sp.add_argument("--method", choices=["ln", "lr", "nlr", "lr-ws"], dest="method")
    sp.add_argument("--dataset", dest="dataset_path")
    sp.add_argument("--id-logprobs", dest="id_logprobs", help="precomputed ID log-probs")
    sp.add_argument("--bg-logprobs", dest="bg_logprobs", help="precomputed background log-probs")
    sp.add_argument("--ngram-order", type=int, dest="ngram_order")
    sp.add_argument("--k", type=float, dest="smoothing_k", help="additive smoothing constant")
    sp.add_argument("--bg", help="background for lr/nlr: uniform, noisy or corpus:PATH")
    sp.add_argument("--p-noise", type=float, dest="p_noise")
    sp.add_argument("--splits", help="comma-separated splits to score (default valid,test)")
    sp.add_argument("--out", help="output scores JSONL")

    sp = sub.add_parser("noise-corpus", help="write a word-substitution-noised copy of a split")
    _add_common(sp)
    sp.add_argument("--in", dest="dataset_path")
    sp.add_argument("--split", help="which split to noise (default train)")
    sp.add_argument("--p-noise", type=float, dest="p_noise")
    sp.add_argument("--out", help="output text file, one sentence per line")

    sp = sub.add_parser("corr-length", help="correlation between scores and sentence length")
    _add_common(sp)
    sp.add_argument("--scores", help="scores JSONL")
    sp.add_argument("--dataset", dest="dataset_path")
    sp.add_argument("--out", help="optional report JSON")

    sp = sub.add_parser("train-rep", help="train the representation head on ID train embeddings")
    _add_common(sp)
    sp.add_argument("--embeddings", dest="embeddings_path")
    sp.add_argument("--dataset", dest="dataset_path")
    sp.add_argument("--k", type=int, dest="k")
    sp.add_argument("--gamma", type=float, dest="gamma")
    sp.add_argument("--tau", type=float, dest="tau")
    sp.add_argument("--alpha", type=float, dest="alpha")
    sp.add_argument("--batch", type=int, dest="batch_size")
    sp.add_argument("--epochs", type=int, dest="epochs")
    sp.add_argument("--learning-rate", type=float, dest="learning_rate")
    sp.add_argument("--dropout", type=float, dest="dropout")
    sp.add_argument("--optimizer", choices=["adam", "sgd"], dest="optimizer")
    sp.add_argument("--hidden-dim", type=int, dest="hidden_dim")
    sp.add_argument("--out-dim", type=int, dest="out_dim")
    sp.add_argument("--no-cluster-loss", dest="cluster_loss_on", action="store_false", default=None)
    sp.add_argument("--no-cl-loss", dest="cl_loss_on", action="store_false", default=None)
    sp.add_argument("--deterministic-q", dest="deterministic_q", action="store_true", default=None)
    sp.add_argument("--out", help="output model bundle")

    sp = sub.add_parser("fit-density", help="fit the mixture density over (adapted) embeddings")
    _add_common(sp)
    sp.add_argument("--embeddings", dest="embeddings_path")
    sp.add_argument("--dataset", dest="dataset_path", help="restricts fitting to the train split and calibrates on valid")
    sp.add_argument("--components", type=int, dest="components")
    sp.add_argument("--eps", type=float, dest="variance_floor")
    sp.add_argument("--fpr-budget", type=float, dest="fpr_budget")
    sp.add_argument("--model-in", dest="model_in", help="bundle carrying a trained encoder")
    sp.add_argument("--model-out", dest="model_out", help="output bundle")

    sp = sub.add_parser("score", help="score embeddings with a fitted bundle")
    _add_common(sp)
    sp.add_argument("--model")
    sp.add_argument("--embeddings", dest="embeddings_path")
    sp.add_argument("--out", help="output scores JSONL")

    sp = sub.add_parser("eval", help="compute detection metrics from scores + dataset flags")
    _add_common(sp)
    sp.add_argument("--scores")
    sp.add_argument("--dataset", dest="dataset_path")
    sp.add_argument("--split", choices=["valid", "test"], help="split to evaluate (default test)")
    sp.add_argument("--level", type=float, dest="tpr_level")
    sp.add_argument("--out", help="output report JSON")

    sp = sub.add_parser("sweep", help="grid-search cluster count and contrastive weight on valid")
    _add_common(sp)
    sp.add_argument("--k", dest="k_list", help="comma-separated cluster counts")
    sp.add_argument("--gamma", dest="gamma_list", help="comma-separated contrastive weights")
    sp.add_argument("--dataset", dest="dataset_path")
    sp.add_argument("--embeddings", dest="embeddings_path")
    sp.add_argument("--epochs", type=int, dest="epochs")
    sp.add_argument("--batch", type=int, dest="batch_size")
    sp.add_argument("--components", type=int, dest="components")
    sp.add_argument("--out", help="output sweep report JSON")

    sp = sub.add_parser("project", help="2-D principal projection of flagged embeddings")
    _add_common(sp)
    sp.add_argument("--embeddings", dest="embeddings_path")
    sp.add_argument("--dataset", dest="dataset_path")
    sp.add_argument("--split", choices=["eval", "valid", "test"], help="default eval = valid+test")
    sp.add_argument("--out", help="output CSV")

    sp = sub.add_parser("serve", help="HTTP scoring service over a fitted bundle")
    _add_common(sp)
    sp.add_argument("--model")
    sp.add_argument("--bind", help="host:port (default 127.0.0.1:8080)")
    sp.add_argument("--provider-url", dest="provider_url")
    sp.add_argument("--timeout-ms", type=int, dest="timeout_ms")
    sp.add_argument("--retries", type=int, dest="retries")
    sp.add_argument("--expected-dim", type=int, dest="expected_dim")

    sp = sub.add_parser("pipeline", help="split -> train-rep -> fit-density -> score -> eval")
    _add_common(sp)
    sp.add_argument("--dataset", dest="dataset_path")
    sp.add_argument("--embeddings", dest="embeddings_path")
    sp.add_argument("--protocol", choices=["coverage", "fixed", "preset"], dest="protocol")
    sp.add_argument("--coverage", type=float, dest="coverage")
    sp.add_argument("--n-ood", type=int, dest="n_ood_classes")
    sp.add_argument("--n-splits", type=int, dest="n_splits")
    sp.add_argument("--k", type=int, dest="k")
    sp.add_argument("--gamma", type=float, dest="gamma")
    sp.add_argument("--epochs", type=int, dest="epochs")
    sp.add_argument("--batch", type=int, dest="batch_size")
    sp.add_argument("--components", type=int, dest="components")
    sp.add_argument("--fpr-budget", type=float, dest="fpr_budget")
    sp.add_argument("--level", type=float, dest="tpr_level")
    sp.add_argument("--no-cluster-loss", dest="cluster_loss_on", action="store_false", default=None)
    sp.add_argument("--no-cl-loss", dest="cl_loss_on", action="store_false", default=None)

    return parser


_COMMANDS = {
    "split": _cmd_split,
    "lm-score": _cmd_lm_score,
    "noise-corpus": _cmd_noise_corpus,
    "corr-length": _cmd_corr_length,
    "train-rep": _cmd_train_rep,
    "fit-density": _cmd_fit_density,
    "score": _cmd_score,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "project": _cmd_project,
    "serve": _cmd_serve,
    "pipeline": _cmd_pipeline,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    if args.command is None:
        _build_parser().print_usage(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except OodkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
