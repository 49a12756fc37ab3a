"""Command line entry point for the embedding exporter."""

from __future__ import annotations

import argparse
import logging
import sys

from .emb1 import Emb1Error
from .export import ExportError, ExportJob, export_embeddings


class _ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgumentError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="encoder-export",
        description="Export per-token encoder states for keyed texts.",
    )
    parser.add_argument("--input", required=True, help="JSONL records with key and text fields")
    parser.add_argument("--model", required=True, help="pretrained encoder name or local path")
    parser.add_argument("--layers", type=int, default=2, help="hidden layers to export, counted from the top")
    parser.add_argument("--max-len", type=int, default=512, help="token budget per record before truncation")
    parser.add_argument("--batch-size", type=int, default=8, help="records per encoder forward pass")
    parser.add_argument("--out", required=True, help="output embedding file")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        job = ExportJob(
            input_path=args.input,
            model=args.model,
            out_path=args.out,
            layers=args.layers,
            max_len=args.max_len,
            batch_size=args.batch_size,
        )
    except _ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        result = export_embeddings(job)
    except (ExportError, Emb1Error, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(
        f"exported {result.records} records "
        f"({result.layers} layers, dim {result.dim}) to {result.out_path}"
    )
    print(f"{len(result.truncations)} truncated, logged to {result.sidecar_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
