"""Inverted index with BM25 scoring and top-k search.

Scoring follows the classic Okapi form: each query term contributes its
inverse document frequency times a saturating, length-normalized term
frequency. Query terms carry weights so that expanded queries (weighted
term distributions) reuse the same scorer; plain queries use weight 1.0 per
term. The natural logarithm is used for IDF, which keeps every term weight
strictly positive.
"""

from __future__ import annotations

import math
import re
from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from . import binio
from .errors import (
    DuplicateIdError,
    EmptyCollectionError,
    FormatError,
    UnknownDocError,
)

# Unicode-aware alphanumeric runs; underscore is a separator.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

INDEX_MAGIC = b"PIDX"
INDEX_VERSION = 1

WeightedTerm = tuple[str, float]


def tokenize(text: str, stopwords: frozenset[str] | set[str] | None = None) -> list[str]:
    """Lowercase and split on non-alphanumerics; no stemming."""
    tokens = _TOKEN_RE.findall(text.lower())
    if stopwords:
        tokens = [t for t in tokens if t not in stopwords]
    return tokens


def weighted(terms: Iterable[str]) -> list[WeightedTerm]:
    """Attach the plain-query weight 1.0 to each term."""
    return [(t, 1.0) for t in terms]


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self):
        if self.k1 < 0:
            raise ValueError(f"k1 must be >= 0, got {self.k1}")
        if not 0 <= self.b <= 1:
            raise ValueError(f"b must be in [0, 1], got {self.b}")


@dataclass
class CollectionStats:
    n_docs: int
    avgdl: float
    total_tokens: int
    df: dict[str, int]
    cf: dict[str, int]


@dataclass
class InvertedIndex:
    """Postings term -> [(doc_id, tf)] sorted by doc_id, plus doc lengths."""

    postings: dict[str, list[tuple[str, int]]]
    doc_len: dict[str, int]
    stats: CollectionStats
    _doc_vectors: dict[str, dict[str, int]] | None = field(
        default=None, repr=False, compare=False
    )

    def has_doc(self, doc_id: str) -> bool:
        return doc_id in self.doc_len

    def term_frequency(self, term: str, doc_id: str) -> int:
        plist = self.postings.get(term)
        if not plist:
            return 0
        i = bisect_left(plist, (doc_id,))
        if i < len(plist) and plist[i][0] == doc_id:
            return plist[i][1]
        return 0

    def doc_term_counts(self, doc_id: str) -> dict[str, int]:
        """Term counts of one document, from a lazily built reverse map."""
        if not self.has_doc(doc_id):
            raise UnknownDocError(f"unknown doc_id '{doc_id}'")
        if self._doc_vectors is None:
            vectors: dict[str, dict[str, int]] = {d: {} for d in self.doc_len}
            for term, plist in self.postings.items():
                for doc, tf in plist:
                    vectors[doc][term] = tf
            self._doc_vectors = vectors
        return self._doc_vectors[doc_id]

    def vocabulary(self) -> list[str]:
        return sorted(self.postings)


@dataclass(frozen=True)
class RankedList:
    """(doc_id, score) entries sorted by score descending, doc_id ascending."""

    entries: tuple[tuple[str, float], ...]

    def __post_init__(self):
        seen = set()
        for (a_id, a_s), (b_id, b_s) in zip(self.entries, self.entries[1:]):
            if a_s < b_s or (a_s == b_s and a_id >= b_id):
                raise ValueError("entries violate (score desc, doc_id asc) order")
        for doc_id, _ in self.entries:
            if doc_id in seen:
                raise ValueError(f"duplicate doc_id '{doc_id}' in ranked list")
            seen.add(doc_id)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def doc_ids(self) -> list[str]:
        return [doc_id for doc_id, _ in self.entries]

    def score_of(self) -> dict[str, float]:
        return dict(self.entries)

    @staticmethod
    def from_scores(scores: Mapping[str, float], k: int | None = None) -> "RankedList":
        ordered = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
        if k is not None:
            ordered = ordered[:k]
        return RankedList(entries=tuple(ordered))


def build_index(
    docs: Iterable[tuple[str, str]],
    stopwords: frozenset[str] | set[str] | None = None,
) -> InvertedIndex:
    """Tokenize documents and build a deterministic inverted index.

    The result is independent of input order: postings lists are sorted by
    doc_id and the term map is sorted by term.
    """
    doc_len: dict[str, int] = {}
    raw_postings: dict[str, dict[str, int]] = {}
    for doc_id, text in docs:
        if doc_id in doc_len:
            raise DuplicateIdError(f"duplicate doc_id '{doc_id}'")
        tokens = tokenize(text, stopwords)
        doc_len[doc_id] = len(tokens)
        counts: dict[str, int] = {}
        for token in tokens:
            counts[token] = counts.get(token, 0) + 1
        for term, tf in counts.items():
            raw_postings.setdefault(term, {})[doc_id] = tf

    doc_len = dict(sorted(doc_len.items()))
    postings = {
        term: sorted(raw_postings[term].items()) for term in sorted(raw_postings)
    }
    df = {term: len(plist) for term, plist in postings.items()}
    cf = {term: sum(tf for _, tf in plist) for term, plist in postings.items()}
    n_docs = len(doc_len)
    total_tokens = sum(doc_len.values())
    avgdl = total_tokens / n_docs if n_docs else 0.0
    return InvertedIndex(
        postings=postings,
        doc_len=doc_len,
        stats=CollectionStats(
            n_docs=n_docs, avgdl=avgdl, total_tokens=total_tokens, df=df, cf=cf
        ),
    )


def idf(term: str, stats: CollectionStats) -> float:
    """ln((N - n + 0.5) / (n + 0.5) + 1); strictly positive for 0 <= n <= N."""
    if stats.n_docs == 0:
        raise EmptyCollectionError("idf undefined for an empty collection")
    n = stats.df.get(term, 0)
    return math.log((stats.n_docs - n + 0.5) / (n + 0.5) + 1.0)


def _tf_norm(tf: int, doc_length: int, avgdl: float, params: Bm25Params) -> float:
    if tf == 0:
        return 0.0
    denom = tf + params.k1 * (1.0 - params.b + params.b * doc_length / avgdl)
    return tf * (params.k1 + 1.0) / denom


def bm25_score(
    query_terms: Sequence[WeightedTerm],
    doc_id: str,
    index: InvertedIndex,
    params: Bm25Params = Bm25Params(),
) -> float:
    """Weighted BM25 score of one document; absent terms contribute 0."""
    if not index.has_doc(doc_id):
        raise UnknownDocError(f"unknown doc_id '{doc_id}'")
    doc_length = index.doc_len[doc_id]
    score = 0.0
    for term, weight in query_terms:
        tf = index.term_frequency(term, doc_id)
        if tf == 0:
            continue
        score += weight * idf(term, index.stats) * _tf_norm(
            tf, doc_length, index.stats.avgdl, params
        )
    return score


def search(
    index: InvertedIndex,
    query_terms: Sequence[WeightedTerm],
    k: int,
    params: Bm25Params = Bm25Params(),
) -> RankedList:
    """Top-k documents containing at least one query term, by BM25 score."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scores: dict[str, float] = {}
    for term, weight in query_terms:
        plist = index.postings.get(term)
        if not plist:
            continue
        term_idf = idf(term, index.stats)
        for doc_id, tf in plist:
            contribution = weight * term_idf * _tf_norm(
                tf, index.doc_len[doc_id], index.stats.avgdl, params
            )
            scores[doc_id] = scores.get(doc_id, 0.0) + contribution
    return RankedList.from_scores(scores, k)


def save_index(index: InvertedIndex, path) -> None:
    """Serialize to the PIDX format; writes are canonical and repeatable.

    Layout: magic "PIDX", u32 version, then three length-prefixed sections
    (stats, doc table, postings). Integers are little-endian u64 unless
    stated; strings are u64-length-prefixed UTF-8; avgdl is a little-endian
    f64. Postings reference documents by index into the sorted doc table.
    """
    doc_ids = sorted(index.doc_len)
    doc_pos = {doc_id: i for i, doc_id in enumerate(doc_ids)}

    stats_blob = (
        binio.pack_u64(index.stats.n_docs)
        + binio.pack_u64(index.stats.total_tokens)
        + binio.pack_f64(index.stats.avgdl)
    )

    doc_blob = binio.pack_u64(len(doc_ids))
    for doc_id in doc_ids:
        doc_blob += binio.pack_str_u64(doc_id) + binio.pack_u64(index.doc_len[doc_id])

    post_blob = binio.pack_u64(len(index.postings))
    for term in sorted(index.postings):
        plist = index.postings[term]
        post_blob += binio.pack_str_u64(term)
        post_blob += binio.pack_u64(index.stats.df[term])
        post_blob += binio.pack_u64(index.stats.cf[term])
        post_blob += binio.pack_u64(len(plist))
        for doc_id, tf in plist:
            post_blob += binio.pack_u64(doc_pos[doc_id]) + binio.pack_u64(tf)

    with open(path, "wb") as handle:
        handle.write(INDEX_MAGIC)
        handle.write(binio.pack_u32(INDEX_VERSION))
        for blob in (stats_blob, doc_blob, post_blob):
            handle.write(binio.pack_u64(len(blob)))
            handle.write(blob)


def load_index(path) -> InvertedIndex:
    with open(path, "rb") as handle:
        data = handle.read()
    reader = binio.ByteReader(data, name=str(path))
    magic = reader.take(4, "magic")
    if magic != INDEX_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {INDEX_MAGIC!r}")
    version = reader.read_u32("version")
    if version != INDEX_VERSION:
        raise FormatError(f"{path}: unsupported index version {version}")

    sections = []
    for name in ("stats", "doc table", "postings"):
        length = reader.read_u64(f"{name} section length")
        sections.append(binio.ByteReader(reader.take(length, f"{name} section"), name=f"{path}:{name}"))
    reader.expect_exhausted()

    stats_r, docs_r, post_r = sections
    n_docs = stats_r.read_u64("N")
    total_tokens = stats_r.read_u64("total_tokens")
    avgdl = stats_r.read_f64("avgdl")
    stats_r.expect_exhausted()

    doc_count = docs_r.read_u64("doc count")
    doc_ids: list[str] = []
    doc_len: dict[str, int] = {}
    for _ in range(doc_count):
        doc_id = docs_r.read_str_u64("doc_id")
        doc_ids.append(doc_id)
        doc_len[doc_id] = docs_r.read_u64("doc_len")
    docs_r.expect_exhausted()
    if doc_count != n_docs:
        raise FormatError(f"{path}: doc table size {doc_count} != N {n_docs}")

    term_count = post_r.read_u64("term count")
    postings: dict[str, list[tuple[str, int]]] = {}
    df: dict[str, int] = {}
    cf: dict[str, int] = {}
    for _ in range(term_count):
        term = post_r.read_str_u64("term")
        df[term] = post_r.read_u64("df")
        cf[term] = post_r.read_u64("cf")
        n_postings = post_r.read_u64("postings count")
        plist: list[tuple[str, int]] = []
        for _ in range(n_postings):
            doc_pos = post_r.read_u64("doc index")
            tf = post_r.read_u64("tf")
            if doc_pos >= len(doc_ids):
                raise FormatError(f"{path}: doc index {doc_pos} out of range")
            plist.append((doc_ids[doc_pos], tf))
        if df[term] != len(plist):
            raise FormatError(f"{path}: df mismatch for term '{term}'")
        postings[term] = plist
    post_r.expect_exhausted()

    return InvertedIndex(
        postings=postings,
        doc_len=doc_len,
        stats=CollectionStats(
            n_docs=n_docs, avgdl=avgdl, total_tokens=total_tokens, df=df, cf=cf
        ),
    )
