"""Command-line entry points mirroring the export job fields."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .embed import export_embeddings
from .jobs import ExportError, ExportJob
from .logprob import export_logprobs
from .provider import serve_provider


def _job(args: argparse.Namespace) -> ExportJob:
    return ExportJob(
        model=args.model,
        dataset_path=args.dataset,
        out_path=args.out,
        pooling=args.pooling if hasattr(args, "pooling") else "mean-last-layer",
        batch_size=args.batch,
        device=args.device,
    )


def _cmd_export_embeddings(args: argparse.Namespace) -> int:
    path = export_embeddings(_job(args))
    print(f"wrote embeddings to {path}")
    return 0


def _cmd_export_logprobs(args: argparse.Namespace) -> int:
    path = export_logprobs(_job(args), with_tokens=args.with_tokens)
    print(f"wrote token log-probs to {path}")
    return 0


def _cmd_serve_provider(args: argparse.Namespace) -> int:
    print(f"serving embedding provider for {args.model} on {args.bind}")
    serve_provider(args.model, args.bind, batch_size=args.batch, device=args.device)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oodx",
        description="Export embeddings and token log-probs from transformer models",
    )
    parser.add_argument("--version", action="version", version=f"oodx {__version__}")
    sub = parser.add_subparsers(dest="command")

    def common(sp, dataset: bool = True) -> None:
        sp.add_argument("--model", required=True, help="local model directory")
        if dataset:
            sp.add_argument("--dataset", required=True, help="dataset JSONL path")
            sp.add_argument("--out", required=True, help="output file path")
        sp.add_argument("--batch", type=int, default=32, help="batch size")
        sp.add_argument("--device", default="cpu", help="torch device hint")

    sp = sub.add_parser(
        "export-embeddings", help="mean-pooled last-layer sentence embeddings"
    )
    common(sp)
    sp.add_argument(
        "--pooling",
        choices=["mean-last-layer"],
        default="mean-last-layer",
        help="pooling mode",
    )
    sp.set_defaults(handler=_cmd_export_embeddings)

    sp = sub.add_parser(
        "export-logprobs", help="teacher-forced token log-probs from a causal LM"
    )
    common(sp)
    sp.add_argument(
        "--with-tokens",
        action="store_true",
        help="also record the token strings per row",
    )
    sp.set_defaults(handler=_cmd_export_logprobs)

    sp = sub.add_parser("serve-provider", help="run the embedding provider service")
    common(sp, dataset=False)
    sp.add_argument("--bind", default="127.0.0.1:8081", help="host:port to listen on")
    sp.set_defaults(handler=_cmd_serve_provider)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    if not hasattr(args, "handler"):
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.handler(args)
    except ExportError as exc:
        print(f"export error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
