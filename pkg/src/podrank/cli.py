"""Command-line interface: one subcommand per stage plus `pipeline`.

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import pipeline as pl
from .config import CONFIG_KEYS, PipelineConfig, parse_config
from .embedding import SEP_TOKEN
from .errors import ConfigError, PodrankError, TrainingDataError
from .index import tokenize
from .rerank import (
    LabeledPair,
    RegressionHead,
    ScoringHead,
    VARIANT_CONCAT,
    VARIANT_LAST,
    default_kernel_bank,
    save_head,
    train_head,
)
from .embedding import hash_embed


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; the contract is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--corpus", help="episode corpus (JSONL)")
    parser.add_argument("--queries", help="query file (JSONL)")
    parser.add_argument("--qrels", help="TREC qrels file")
    parser.add_argument("--out-dir", dest="out_dir", help="directory for all outputs")
    parser.add_argument("--tag", help="run tag written into run files")
    parser.add_argument("--seed", type=int, help="seed for embeddings and training")
    parser.add_argument("--variant", choices=("sim", "reg", "reg-concat"), help="neural scorer")
    parser.add_argument("--provider", help="'hash' or 'file:<path>' embedding source")
    parser.add_argument("--head", help="trained head file to score with")
    parser.add_argument("--first-stage-k", dest="first_stage_k", type=int,
                        help="episode shortlist size")
    parser.add_argument("--segment-k", dest="segment_k", type=int,
                        help="segments scored per query")
    parser.add_argument("--k1", type=float, help="term-frequency saturation")
    parser.add_argument("--b", type=float, help="length normalization strength")
    parser.add_argument("--fb-docs", dest="fb_docs", type=int, help="feedback documents")
    parser.add_argument("--fb-terms", dest="fb_terms", type=int, help="expansion terms kept")
    parser.add_argument("--rm3-alpha", dest="rm3_alpha", type=float,
                        help="expansion interpolation weight")
    parser.add_argument("--dirichlet-mu", dest="dirichlet_mu", type=float,
                        help="document model smoothing")
    parser.add_argument("--window-s", dest="window_s", type=float, help="segment window seconds")
    parser.add_argument("--stride-s", dest="stride_s", type=float, help="segment stride seconds")
    parser.add_argument("--words-per-minute", dest="words_per_minute", type=float,
                        help="speech rate for untimestamped transcripts")
    parser.add_argument("--dim", type=int, help="hash embedding dimension")
    parser.add_argument("--layers", type=int, help="hash embedding layer count")
    parser.add_argument("--fusion-alpha", dest="fusion_alpha", type=float,
                        help="lexical evidence weight in fusion")
    parser.add_argument("--loss", choices=("cross-entropy", "hinge"), help="training loss")
    parser.add_argument("--learning-rate", dest="learning_rate", type=float)
    parser.add_argument("--weight-decay", dest="weight_decay", type=float)
    parser.add_argument("--max-epochs", dest="max_epochs", type=int)
    parser.add_argument("--patience", dest="patience", type=int)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--include-empty", dest="include_empty", action="store_const",
                        const=True, help="keep queries without relevant docs in metric means")


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    overrides = {k: v for k, v in vars(args).items() if k in CONFIG_KEYS and v is not None}
    return parse_config(args.config, overrides)


def _require(cfg: PipelineConfig, *keys: str) -> None:
    for key in keys:
        if getattr(cfg, key) in (None, ""):
            raise ConfigError(f"key '{key}': required by this command")


def _cmd_index(cfg: PipelineConfig, args) -> int:
    _require(cfg, "corpus")
    print(pl.stage_index(cfg))
    return 0


def _cmd_search(cfg: PipelineConfig, args) -> int:
    _require(cfg, "queries")
    print(pl.stage_search(cfg))
    return 0


def _cmd_segment(cfg: PipelineConfig, args) -> int:
    _require(cfg, "corpus")
    print(pl.stage_segment(cfg))
    return 0


def _cmd_embed(cfg: PipelineConfig, args) -> int:
    _require(cfg, "queries")
    print(pl.stage_embed(cfg))
    return 0


def _read_pairs(path: str, variant: str) -> list[LabeledPair]:
    pairs: list[LabeledPair] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TrainingDataError(f"{path}: line {line_no}: {exc}") from None
            try:
                label = int(record["label"])
                query = str(record["query"])
                doc = str(record["doc"])
            except KeyError as exc:
                raise TrainingDataError(f"{path}: line {line_no}: missing field {exc}") from None
            description = str(record.get("description", ""))
            query_tokens = tokenize(query)
            doc_tokens = tokenize(doc)
            if not query_tokens or not doc_tokens:
                raise TrainingDataError(
                    f"{path}: line {line_no}: query and doc must both have tokens"
                )
            if variant == "sim":
                pairs.append(LabeledPair(label=label, query_tokens=query_tokens,
                                         doc_tokens=doc_tokens))
            else:
                joint = (
                    query_tokens + [SEP_TOKEN] + tokenize(description)
                    + [SEP_TOKEN] + doc_tokens
                )
                pairs.append(LabeledPair(label=label, joint_tokens=joint))
    return pairs


def _cmd_train_head(cfg: PipelineConfig, args) -> int:
    if not args.pairs:
        raise ConfigError("key 'pairs': required by this command")
    pairs = _read_pairs(args.pairs, cfg.variant)
    bank = None
    if cfg.variant == "sim":
        bank = default_kernel_bank()
        head = ScoringHead.zeros(bank.size)
    else:
        variant = VARIANT_LAST if cfg.variant == "reg" else VARIANT_CONCAT
        head = RegressionHead.zeros(cfg.dim, variant)

    def embed_fn(tokens):
        return hash_embed(tokens, cfg.dim, cfg.layers, cfg.seed)

    result = train_head(pairs, head, cfg.train_config(), embed_fn, bank)
    out = args.head_out or pl.out_path(cfg, "head.txt")
    save_head(out, result.head, bank)
    losses = " ".join(f"{loss:.6f}" for loss in result.loss_history)
    print(f"steps={result.steps} stopped_early={result.stopped_early} epoch_loss=[{losses}]")
    print(out)
    return 0


def _cmd_rerank(cfg: PipelineConfig, args) -> int:
    _require(cfg, "queries")
    print(pl.stage_rerank(cfg))
    return 0


def _cmd_fuse(cfg: PipelineConfig, args) -> int:
    print(pl.stage_fuse(cfg))
    return 0


def _cmd_evaluate(cfg: PipelineConfig, args) -> int:
    _require(cfg, "qrels")
    report = pl.stage_evaluate(cfg, args.run)
    print(pl.format_report(report), end="")
    return 0


def _cmd_pipeline(cfg: PipelineConfig, args) -> int:
    _require(cfg, "corpus", "queries")
    final, report = pl.run_pipeline(cfg)
    print(final)
    if report is not None:
        print(pl.format_report(report), end="")
    return 0


_COMMANDS = {
    "index": (_cmd_index, "build the episode index"),
    "segment": (_cmd_segment, "segment shortlisted episodes"),
    "search": (_cmd_search, "first-stage episode ranking"),
    "embed": (_cmd_embed, "materialize hash embeddings to a file"),
    "train-head": (_cmd_train_head, "fit a scoring head on labeled pairs"),
    "rerank": (_cmd_rerank, "neural scoring of segment candidates"),
    "fuse": (_cmd_fuse, "blend neural and lexical scores"),
    "evaluate": (_cmd_evaluate, "score a run file against qrels"),
    "pipeline": (_cmd_pipeline, "run every stage end to end"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="podrank", description="Two-stage podcast episode/segment ranking.")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in _COMMANDS.items():
        sub = subparsers.add_parser(name, help=help_text)
        _add_config_flags(sub)
        if name == "train-head":
            sub.add_argument("--pairs", help="labeled pairs (JSONL)")
            sub.add_argument("--head-out", dest="head_out", help="where to write the head")
        if name == "evaluate":
            sub.add_argument("--run", help="run file to score (default: the fused run)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _config_from_args(args)
        handler, _ = _COMMANDS[args.command]
        return handler(cfg, args)
    except ConfigError as exc:
        print(f"podrank: {exc}", file=sys.stderr)
        return 1
    except (PodrankError, OSError) as exc:
        print(f"podrank: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
