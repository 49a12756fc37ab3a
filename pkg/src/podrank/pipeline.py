"""End-to-end ranking pipeline and its individual stages.

Every stage consumes and produces files, and the `pipeline` entry point is
exactly the stages run back to back over the same intermediate artifacts in
the output directory. Staged subcommands therefore reproduce the pipeline's
outputs byte for byte.
"""

from __future__ import annotations

import logging
import os
from contextlib import contextmanager

from .config import PipelineConfig
from .corpus import (
    Query,
    Segment,
    episode_document,
    iter_sorted_segments,
    read_corpus,
    read_queries,
    read_segments,
    segment_episode,
    write_segments,
)
from .embedding import FileEmbeddingProvider, HashEmbeddingProvider, write_embedding_file
from .errors import ExpansionError, PodrankError, StageError
from .index import (
    InvertedIndex,
    RankedList,
    build_index,
    load_index,
    save_index,
    search,
    tokenize,
    weighted,
)
from .prf import expand_query
from .rerank import (
    RegressionHead,
    RegressionSegmentScorer,
    ScoringHead,
    SimilaritySegmentScorer,
    VARIANT_CONCAT,
    VARIANT_LAST,
    default_kernel_bank,
    load_head,
    rerank_segments,
)
from .trec_eval import (
    METRICS,
    MetricReport,
    RunFile,
    evaluate,
    read_qrels,
    read_run,
    write_run,
)
from .fusion import fuse_ranked

log = logging.getLogger(__name__)

INDEX_FILE = "index.pidx"
EPISODE_RUN_FILE = "episodes.run"
SEGMENTS_FILE = "segments.jsonl"
EMBEDDINGS_FILE = "embeddings.emb"
NEURAL_RUN_FILE = "neural.run"
FINAL_RUN_FILE = "final.run"
METRICS_FILE = "metrics.txt"


@contextmanager
def stage(name: str):
    """Tag any domain error with the stage it came from.

    OSError covers unreadable or missing input files, which are data
    problems from the caller's point of view.
    """
    try:
        yield
    except StageError:
        raise
    except (PodrankError, OSError) as exc:
        raise StageError(name, exc) from exc


def out_path(cfg: PipelineConfig, name: str) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    return os.path.join(cfg.out_dir, name)


def _file_precision(ranked: RankedList) -> RankedList:
    """Re-sort at the run file's six-decimal score precision.

    Scores that collide once rounded tie-break on doc id, exactly as a
    reader of the written file would reconstruct them, so in-memory and
    on-disk orderings never diverge.
    """
    return RankedList.from_scores({d: float(format(s, ".6f")) for d, s in ranked})


def _run_rankings(run: RunFile) -> dict[str, RankedList]:
    scores: dict[str, dict[str, float]] = {}
    for row in run.rows:
        scores.setdefault(row.qid, {})[row.doc_id] = row.score
    return {qid: RankedList.from_scores(per_doc) for qid, per_doc in scores.items()}


def stage_index(cfg: PipelineConfig) -> str:
    """Build and persist the episode-level inverted index."""
    with stage("index"):
        episodes = read_corpus(cfg.corpus)
        index = build_index((e.episode_id, episode_document(e)) for e in episodes)
        path = out_path(cfg, INDEX_FILE)
        save_index(index, path)
    return path


def first_stage_query(
    index: InvertedIndex, query: Query, cfg: PipelineConfig
) -> RankedList:
    """BM25 over the RM3-expanded query; falls back to the raw query when
    no feedback documents exist."""
    terms = tokenize(query.query)
    if not terms:
        return RankedList(())
    try:
        expanded = expand_query(index, terms, cfg.rm3_params()).as_weighted()
    except ExpansionError:
        log.warning("query '%s': no feedback documents, searching unexpanded", query.qid)
        expanded = weighted(terms)
    return search(index, expanded, cfg.first_stage_k, cfg.bm25_params())


def stage_search(cfg: PipelineConfig) -> str:
    """Rank episodes for every query and write the first-stage run file."""
    with stage("search"):
        index = load_index(out_path(cfg, INDEX_FILE))
        queries = read_queries(cfg.queries)
        per_query = [
            (q.qid, _file_precision(first_stage_query(index, q, cfg))) for q in queries
        ]
        per_query.sort(key=lambda item: item[0])
        path = out_path(cfg, EPISODE_RUN_FILE)
        write_run(path, RunFile.from_ranked(per_query, cfg.tag))
    return path


def stage_segment(cfg: PipelineConfig) -> str:
    """Cut every episode present in the first-stage run into segments."""
    with stage("segment"):
        episode_run = read_run(out_path(cfg, EPISODE_RUN_FILE))
        shortlisted = {row.doc_id for row in episode_run.rows}
        episodes = [e for e in read_corpus(cfg.corpus) if e.episode_id in shortlisted]
        seg_cfg = cfg.segmentation()
        segments: list[Segment] = []
        for episode in episodes:
            segments.extend(segment_episode(episode, seg_cfg))
        path = out_path(cfg, SEGMENTS_FILE)
        write_segments(path, iter_sorted_segments(segments))
    return path


def stage_embed(cfg: PipelineConfig) -> str:
    """Materialize hash embeddings for queries and segments into a file."""
    with stage("embed"):
        queries = read_queries(cfg.queries)
        segments = read_segments(out_path(cfg, SEGMENTS_FILE))
        provider = HashEmbeddingProvider.for_run(
            queries, segments, dim=cfg.dim, layers=cfg.layers, seed=cfg.seed
        )
        records = {}
        for query in queries:
            records[query.qid] = provider.query_embedding(query.qid)
        for segment in segments:
            if segment.text.strip():
                records[segment.segment_id] = provider.segment_embedding(segment.segment_id)
        path = out_path(cfg, EMBEDDINGS_FILE)
        write_embedding_file(path, records)
    return path


def _provider(cfg: PipelineConfig, queries: list[Query], segments: list[Segment]):
    if cfg.provider == "hash":
        return HashEmbeddingProvider.for_run(
            queries, segments, dim=cfg.dim, layers=cfg.layers, seed=cfg.seed
        )
    return FileEmbeddingProvider.from_path(cfg.provider[len("file:") :])


def _load_heads(cfg: PipelineConfig, provider) -> tuple:
    """(kernel bank, similarity head) or (None, regression head) per variant."""
    if cfg.head is not None:
        head, bank = load_head(cfg.head)
        if cfg.variant == "sim" and not isinstance(head, ScoringHead):
            raise StageError("rerank", PodrankError("head file does not hold a similarity head"))
        if cfg.variant != "sim" and not isinstance(head, RegressionHead):
            raise StageError("rerank", PodrankError("head file does not hold a regression head"))
        return bank, head
    if cfg.variant == "sim":
        bank = default_kernel_bank()
        return bank, ScoringHead.zeros(bank.size)
    variant = VARIANT_LAST if cfg.variant == "reg" else VARIANT_CONCAT
    layers = provider.layers if isinstance(provider, FileEmbeddingProvider) else cfg.layers
    dim = provider.dim if isinstance(provider, FileEmbeddingProvider) else cfg.dim
    if variant == VARIANT_CONCAT and layers < 2:
        raise StageError("rerank", PodrankError("variant reg-concat needs >= 2 layers"))
    # Joint sequences concatenate two embedded parts of the same width.
    return None, RegressionHead.zeros(dim, variant)


def _scorer_for(cfg: PipelineConfig, qid: str, bank, head):
    if cfg.variant == "sim":
        return SimilaritySegmentScorer(qid, bank, head)
    return RegressionSegmentScorer(qid, head)


def segment_candidates(
    episode_ranked: RankedList, segments_by_episode: dict[str, list[Segment]]
) -> RankedList:
    """Segments of shortlisted episodes, carrying their episode's score.

    Empty-text segments are dropped: they have no tokens to embed. Ties
    inside an episode resolve by segment id, so the candidate order is
    deterministic and the segment cutoff is reproducible.
    """
    scores: dict[str, float] = {}
    for episode_id, score in episode_ranked:
        for segment in segments_by_episode.get(episode_id, ()):
            if segment.text.strip():
                scores[segment.segment_id] = score
    return RankedList.from_scores(scores)


def stage_rerank(cfg: PipelineConfig) -> str:
    """Neural scores for the top segment candidates of every query."""
    with stage("rerank"):
        episode_run = read_run(out_path(cfg, EPISODE_RUN_FILE))
        queries = read_queries(cfg.queries)
        segments = read_segments(out_path(cfg, SEGMENTS_FILE))
        by_episode: dict[str, list[Segment]] = {}
        for segment in segments:
            by_episode.setdefault(segment.episode_id, []).append(segment)
        provider = _provider(cfg, queries, segments)
        bank, head = _load_heads(cfg, provider)

        ranked_by_qid = _run_rankings(episode_run)
        per_query = []
        for query in sorted(queries, key=lambda q: q.qid):
            episode_ranked = ranked_by_qid.get(query.qid, RankedList(()))
            candidates = segment_candidates(episode_ranked, by_episode)
            if len(candidates) == 0:
                per_query.append((query.qid, RankedList(())))
                continue
            scorer = _scorer_for(cfg, query.qid, bank, head)
            reranked = rerank_segments(candidates, scorer, provider, cfg.segment_k)
            per_query.append((query.qid, _file_precision(reranked)))
        path = out_path(cfg, NEURAL_RUN_FILE)
        write_run(path, RunFile.from_ranked(per_query, cfg.tag))
    return path


def stage_fuse(cfg: PipelineConfig) -> str:
    """Blend neural segment scores with first-stage episode scores."""
    with stage("fuse"):
        episode_run = read_run(out_path(cfg, EPISODE_RUN_FILE))
        neural_run = read_run(out_path(cfg, NEURAL_RUN_FILE))
        params = cfg.fusion_params()
        episode_scores = _run_rankings(episode_run)
        neural_scores = _run_rankings(neural_run)
        per_query = []
        for qid in sorted(neural_scores):
            fused = fuse_ranked(
                neural_scores[qid], episode_scores.get(qid, RankedList(())), params
            )
            per_query.append((qid, _file_precision(fused)))
        path = out_path(cfg, FINAL_RUN_FILE)
        write_run(path, RunFile.from_ranked(per_query, cfg.tag))
    return path


def format_report(report: MetricReport) -> str:
    lines = ["qid     " + "  ".join(f"{m:>8}" for m in METRICS)]
    for qid in sorted(report.per_query):
        values = report.per_query[qid]
        lines.append(f"{qid:<8}" + "  ".join(f"{values[m]:8.4f}" for m in METRICS))
    lines.append("mean    " + "  ".join(f"{report.means[m]:8.4f}" for m in METRICS))
    return "\n".join(lines) + "\n"


def stage_evaluate(cfg: PipelineConfig, run_path: str | None = None) -> MetricReport:
    """Score a run file against the configured qrels."""
    with stage("evaluate"):
        run = read_run(run_path or out_path(cfg, FINAL_RUN_FILE))
        qrels = read_qrels(cfg.qrels)
        report = evaluate(run, qrels, include_empty=cfg.include_empty)
        with open(out_path(cfg, METRICS_FILE), "w", encoding="utf-8") as handle:
            handle.write(format_report(report))
    return report


def run_pipeline(cfg: PipelineConfig) -> tuple[str, MetricReport | None]:
    """Index, search, segment, rerank, fuse; evaluate when qrels are given.

    Returns the final run file path and the metric report (None without
    qrels). Deterministic for a fixed config: rerunning produces
    byte-identical artifacts.
    """
    stage_index(cfg)
    stage_search(cfg)
    stage_segment(cfg)
    stage_rerank(cfg)
    final = stage_fuse(cfg)
    report = stage_evaluate(cfg) if cfg.qrels else None
    return final, report
