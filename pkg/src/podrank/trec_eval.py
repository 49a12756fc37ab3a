"""TREC-format run and qrels files plus the ranking metrics reported on them.

Metrics follow the common TREC conventions: precision counts grades >= 1 as
relevant and always divides by k; nDCG uses exponential gain (2^rel - 1)
with a log2(rank+1) discount, the ideal ordering drawn from all judged
relevances, and the full-list variant evaluated at k = |judged or retrieved|.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import QrelsError, RunFileError
from .index import RankedList

log = logging.getLogger(__name__)

METRICS = ("P@10", "P@20", "nDCG@20", "nDCG@100", "nDCG")


def _quantize(score: float) -> float:
    # Scores live at the file format's six-decimal precision so that
    # write -> read is the identity.
    return float(format(score, ".6f"))


@dataclass(frozen=True)
class RunRow:
    qid: str
    doc_id: str
    rank: int
    score: float
    tag: str


@dataclass
class RunFile:
    rows: list[RunRow]

    def __post_init__(self):
        self.rows = [
            RunRow(r.qid, r.doc_id, r.rank, _quantize(r.score), r.tag) for r in self.rows
        ]
        seen: set[tuple[str, str]] = set()
        ranks: dict[str, int] = {}
        last_score: dict[str, float] = {}
        for row in self.rows:
            key = (row.qid, row.doc_id)
            if key in seen:
                raise RunFileError(f"duplicate entry for query '{row.qid}' doc '{row.doc_id}'")
            seen.add(key)
            expected = ranks.get(row.qid, 0) + 1
            if row.rank != expected:
                raise RunFileError(
                    f"query '{row.qid}': rank {row.rank} out of order, expected {expected}"
                )
            ranks[row.qid] = row.rank
            if row.qid in last_score and row.score > last_score[row.qid]:
                raise RunFileError(
                    f"query '{row.qid}': score {row.score} increases at rank {row.rank}"
                )
            last_score[row.qid] = row.score

    def qids(self) -> list[str]:
        out: list[str] = []
        seen: set[str] = set()
        for row in self.rows:
            if row.qid not in seen:
                seen.add(row.qid)
                out.append(row.qid)
        return out

    def ranking(self, qid: str) -> list[str]:
        rows = sorted((r for r in self.rows if r.qid == qid), key=lambda r: r.rank)
        return [r.doc_id for r in rows]

    @classmethod
    def from_ranked(cls, per_query: Iterable[tuple[str, RankedList]], tag: str) -> "RunFile":
        rows = [
            RunRow(qid, doc_id, rank, score, tag)
            for qid, ranked in per_query
            for rank, (doc_id, score) in enumerate(ranked, start=1)
        ]
        return cls(rows)


@dataclass
class Qrels:
    judgments: dict[tuple[str, str], int] = field(default_factory=dict)

    def __post_init__(self):
        for (qid, doc_id), rel in self.judgments.items():
            if rel < 0:
                raise QrelsError(f"negative relevance for query '{qid}' doc '{doc_id}'")

    def for_qid(self, qid: str) -> dict[str, int]:
        return {d: rel for (q, d), rel in self.judgments.items() if q == qid}

    def qids(self) -> list[str]:
        return sorted({qid for qid, _ in self.judgments})


def precision_at_k(doc_ids: Sequence[str], rels: dict[str, int], k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = sum(1 for doc_id in doc_ids[:k] if rels.get(doc_id, 0) >= 1)
    return hits / k


def _dcg(gains: Sequence[int]) -> float:
    return sum((2.0**g - 1.0) / math.log2(r + 1) for r, g in enumerate(gains, start=1))


def ndcg_at_k(doc_ids: Sequence[str], rels: dict[str, int], k: int | None = None) -> float:
    """nDCG at cutoff k; k=None evaluates the full list.

    The full-list cutoff spans every judged or retrieved document, so ideal
    and actual rankings are compared over the same pool.
    """
    if k is None:
        k = len(set(rels) | set(doc_ids))
    if k < 1:
        raise ValueError("k must be >= 1")
    ideal = sorted(rels.values(), reverse=True)[:k]
    idcg = _dcg(ideal)
    if idcg == 0.0:
        return 0.0
    gains = [rels.get(doc_id, 0) for doc_id in doc_ids[:k]]
    return _dcg(gains) / idcg


@dataclass
class MetricReport:
    per_query: dict[str, dict[str, float]]
    means: dict[str, float]
    averaged_qids: list[str]


def evaluate(run: RunFile, qrels: Qrels, include_empty: bool = False) -> MetricReport:
    """All five metrics per query plus arithmetic means.

    Queries missing from the qrels are skipped with a warning; queries with
    no judged-relevant document are excluded from the means unless
    include_empty is set.
    """
    judged_qids = set(qrels.qids())
    per_query: dict[str, dict[str, float]] = {}
    averaged: list[str] = []
    for qid in run.qids():
        if qid not in judged_qids:
            log.warning("query '%s' has no judgments; excluded from evaluation", qid)
            continue
        rels = qrels.for_qid(qid)
        docs = run.ranking(qid)
        per_query[qid] = {
            "P@10": precision_at_k(docs, rels, 10),
            "P@20": precision_at_k(docs, rels, 20),
            "nDCG@20": ndcg_at_k(docs, rels, 20),
            "nDCG@100": ndcg_at_k(docs, rels, 100),
            "nDCG": ndcg_at_k(docs, rels),
        }
        if include_empty or any(rel >= 1 for rel in rels.values()):
            averaged.append(qid)
    means = {
        metric: (
            sum(per_query[qid][metric] for qid in averaged) / len(averaged) if averaged else 0.0
        )
        for metric in METRICS
    }
    return MetricReport(per_query=per_query, means=means, averaged_qids=averaged)


def write_run(path, run: RunFile) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for row in run.rows:
            handle.write(
                f"{row.qid} Q0 {row.doc_id} {row.rank} {row.score:.6f} {row.tag}\n"
            )


def read_run(path) -> RunFile:
    rows: list[RunRow] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 6:
                raise RunFileError(f"{path}: line {line_no}: expected 6 columns, got {len(parts)}")
            qid, _, doc_id, rank_s, score_s, tag = parts
            try:
                rank = int(rank_s)
                score = float(score_s)
            except ValueError as exc:
                raise RunFileError(f"{path}: line {line_no}: {exc}") from None
            rows.append(RunRow(qid, doc_id, rank, score, tag))
    try:
        return RunFile(rows)
    except RunFileError as exc:
        raise RunFileError(f"{path}: {exc}") from None


def read_qrels(path) -> Qrels:
    judgments: dict[tuple[str, str], int] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise QrelsError(f"{path}: line {line_no}: expected 4 columns, got {len(parts)}")
            qid, _, doc_id, rel_s = parts
            try:
                rel = int(rel_s)
            except ValueError:
                raise QrelsError(
                    f"{path}: line {line_no}: relevance '{rel_s}' is not an integer"
                ) from None
            if rel < 0:
                raise QrelsError(f"{path}: line {line_no}: negative relevance {rel}")
            if (qid, doc_id) in judgments:
                log.warning("duplicate judgment for (%s, %s); keeping the later value", qid, doc_id)
            judgments[(qid, doc_id)] = rel
    return Qrels(judgments)


def write_qrels(path, qrels: Qrels) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for (qid, doc_id), rel in sorted(qrels.judgments.items()):
            handle.write(f"{qid} 0 {doc_id} {rel}\n")
