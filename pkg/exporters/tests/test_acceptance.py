"""Exporter round-trip acceptance: one printed pass/fail line.

Checks, in one sitting, that exported embedding and log-prob files load
in the toolkit with zero alignment errors, that the exporter's
length-normalized score equals the toolkit's on the same streams to
1e-9, and that a live provider satisfies the wire contract for a
three-text request.
"""

from __future__ import annotations

from oodx import ExportJob, export_embeddings, export_logprobs, ln_score

from oodkit.datamodel import (
    load_dataset,
    load_embeddings,
    load_logprobs,
    validate_alignment,
)
from oodkit.likelihood import score_ln
from oodkit.service import ProviderConfig, fetch_embeddings

from .conftest import HIDDEN
from .test_provider import running_provider


def _emit(capsys, name: str, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


def test_exporter_round_trip(encoder_dir, lm_dir, dataset_path, tmp_path, capsys):
    dataset = load_dataset(dataset_path)

    emb_path = tmp_path / "ten.emb"
    export_embeddings(ExportJob(encoder_dir, dataset_path, str(emb_path)))
    emb_report = validate_alignment(dataset, load_embeddings(emb_path))
    emb_clean = emb_report.missing_in_aux == () and emb_report.extra_in_aux == ()

    lp_path = tmp_path / "ten.lp"
    export_logprobs(ExportJob(lm_dir, dataset_path, str(lp_path)))
    lps = load_logprobs(lp_path)
    lp_report = validate_alignment(dataset, lps)
    lp_clean = lp_report.missing_in_aux == () and lp_report.extra_in_aux == ()

    worst_ln = max(abs(ln_score(v) - score_ln(v)) for _, v in lps.rows)

    texts = ["pay bill", "open branch loan", "rate"]
    with running_provider(encoder_dir) as base:
        got = fetch_embeddings(ProviderConfig(base_url=base), texts)
    provider_ok = got.vectors.shape == (3, HIDDEN) and got.ids == (
        "text-0",
        "text-1",
        "text-2",
    )

    ok = emb_clean and lp_clean and worst_ln <= 1e-9 and provider_ok
    _emit(
        capsys,
        "exporter-round-trip",
        ok,
        f"alignment errors: emb={not emb_clean} lp={not lp_clean}; "
        f"max |LN delta|={worst_ln:.3e} (bar 1e-9); "
        f"provider 3-text contract={'ok' if provider_ok else 'violated'}",
    )
    assert ok
