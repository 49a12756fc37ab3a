"""Relevance-model query expansion over an inverted index.

Feedback documents are the top documents by query likelihood under
Dirichlet-smoothed document language models. The first relevance model
averages those document models weighted by query likelihood; the expanded
query interpolates that distribution with the maximum-likelihood query
model and truncates to the highest-probability expansion terms. Likelihood
products are evaluated in log space to avoid underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import EmptyCollectionError, ExpansionError, UnknownDocError
from .index import InvertedIndex

_SUM_TOL = 1e-9


@dataclass
class LanguageModel:
    """A discrete probability distribution over terms."""

    probs: dict[str, float]

    def total(self) -> float:
        return sum(self.probs.values())

    def normalized(self) -> "LanguageModel":
        total = self.total()
        if total <= 0:
            raise ValueError("cannot normalize an all-zero distribution")
        return LanguageModel({t: p / total for t, p in self.probs.items()})


@dataclass(frozen=True)
class Rm3Params:
    fb_docs: int = 10
    fb_terms: int = 10
    rm3_alpha: float = 0.5
    dirichlet_mu: float = 2500.0

    def __post_init__(self):
        if self.fb_docs < 1:
            raise ValueError("fb_docs must be >= 1")
        if self.fb_terms < 1:
            raise ValueError("fb_terms must be >= 1")
        if not 0.0 <= self.rm3_alpha <= 1.0:
            raise ValueError("rm3_alpha must be in [0, 1]")
        if self.dirichlet_mu <= 0:
            raise ValueError("dirichlet_mu must be positive")


@dataclass
class ExpandedQuery:
    terms: list[tuple[str, float]]

    def as_weighted(self) -> list[tuple[str, float]]:
        return list(self.terms)


def collection_lm(index: InvertedIndex) -> LanguageModel:
    """Background model: collection term frequency over total tokens."""
    if index.stats.n_docs == 0 or index.stats.total_tokens == 0:
        raise EmptyCollectionError("collection language model needs a non-empty index")
    total = index.stats.total_tokens
    return LanguageModel({term: cf / total for term, cf in sorted(index.stats.cf.items())})


def smoothed_doc_lm(
    doc_id: str, index: InvertedIndex, mu: float, _collection: LanguageModel | None = None
) -> LanguageModel:
    """Dirichlet-smoothed document model over the full collection vocabulary."""
    if not index.has_doc(doc_id):
        raise UnknownDocError(f"unknown doc_id '{doc_id}'")
    if mu <= 0:
        raise ValueError("mu must be positive")
    coll = _collection or collection_lm(index)
    counts = index.doc_term_counts(doc_id)
    length = index.doc_len[doc_id]
    denom = length + mu
    return LanguageModel(
        {term: (counts.get(term, 0) + mu * p) / denom for term, p in coll.probs.items()}
    )


def query_lm(query_terms: Sequence[str]) -> LanguageModel:
    """Maximum-likelihood query model: uniform over term occurrences."""
    if not query_terms:
        raise ValueError("query_terms must be non-empty")
    counts: dict[str, int] = {}
    for term in query_terms:
        counts[term] = counts.get(term, 0) + 1
    m = len(query_terms)
    return LanguageModel({term: c / m for term, c in counts.items()})


def _log_query_likelihood(
    query_terms: Sequence[str],
    doc_id: str,
    index: InvertedIndex,
    mu: float,
    coll: LanguageModel,
) -> float:
    """Sum of log Dirichlet-smoothed probabilities of the query terms.

    Terms absent from the whole collection carry no likelihood signal for
    any document and are skipped rather than zeroing every product.
    """
    counts = index.doc_term_counts(doc_id)
    denom = index.doc_len[doc_id] + mu
    total = 0.0
    for term in query_terms:
        p_coll = coll.probs.get(term, 0.0)
        if p_coll <= 0.0 and term not in counts:
            continue
        p = (counts.get(term, 0) + mu * p_coll) / denom
        if p <= 0.0:
            return -math.inf
        total += math.log(p)
    return total


def feedback_documents(
    query_terms: Sequence[str], index: InvertedIndex, params: Rm3Params
) -> list[tuple[str, float]]:
    """Top fb_docs (doc_id, log-likelihood) among docs sharing a query term.

    Ties in likelihood break on ascending doc_id so the feedback set is
    deterministic.
    """
    candidates: set[str] = set()
    for term in set(query_terms):
        for doc_id, _ in index.postings.get(term, []):
            candidates.add(doc_id)
    if not candidates:
        raise ExpansionError("no feedback documents: no document matches the query")
    coll = collection_lm(index)
    scored = [
        (doc_id, _log_query_likelihood(query_terms, doc_id, index, params.dirichlet_mu, coll))
        for doc_id in sorted(candidates)
    ]
    scored = [(d, ll) for d, ll in scored if ll > -math.inf]
    if not scored:
        raise ExpansionError("no feedback documents: query has zero likelihood everywhere")
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored[: params.fb_docs]


def rm1(
    query_terms: Sequence[str], index: InvertedIndex, params: Rm3Params
) -> LanguageModel:
    """First relevance model: likelihood-weighted average of feedback models.

    p1(w|Q) is proportional to the sum over feedback documents of
    p(w|doc model) * product_i p(q_i|doc model), with a uniform document
    prior; the result is normalized to sum to 1.
    """
    feedback = feedback_documents(query_terms, index, params)
    coll = collection_lm(index)
    max_ll = max(ll for _, ll in feedback)
    accum: dict[str, float] = {}
    for doc_id, ll in feedback:
        doc_weight = math.exp(ll - max_ll)
        doc_lm = smoothed_doc_lm(doc_id, index, params.dirichlet_mu, _collection=coll)
        for term, p in doc_lm.probs.items():
            accum[term] = accum.get(term, 0.0) + doc_weight * p
    return LanguageModel(accum).normalized()


def rm2(
    query_terms: Sequence[str], index: InvertedIndex, params: Rm3Params
) -> LanguageModel:
    """Second relevance model: per-term association across feedback docs.

    p2(w|Q) is proportional to p(w) times the product over query terms of
    the feedback-set average of p(q_i|doc) * p(w|doc) / p(w). Kept for
    completeness; the expansion pipeline uses rm1.
    """
    feedback = feedback_documents(query_terms, index, params)
    coll = collection_lm(index)
    doc_lms = {
        doc_id: smoothed_doc_lm(doc_id, index, params.dirichlet_mu, _collection=coll)
        for doc_id, _ in feedback
    }
    prior = 1.0 / len(feedback)

    log_scores: dict[str, float] = {}
    for term, p_w in coll.probs.items():
        if p_w <= 0.0:
            continue
        log_score = math.log(p_w)
        dead = False
        for q in query_terms:
            if coll.probs.get(q, 0.0) <= 0.0:
                continue  # absent from the whole collection: no signal
            inner = 0.0
            for doc_id in doc_lms:
                doc_lm = doc_lms[doc_id]
                inner += doc_lm.probs.get(q, 0.0) * doc_lm.probs[term] * prior / p_w
            if inner <= 0.0:
                dead = True
                break
            log_score += math.log(inner)
        if not dead:
            log_scores[term] = log_score
    if not log_scores:
        raise ExpansionError("rm2 produced an empty distribution")
    max_log = max(log_scores.values())
    probs = {term: math.exp(score - max_log) for term, score in log_scores.items()}
    return LanguageModel(probs).normalized()


def rm3_interpolate(
    original_query_lm: LanguageModel, rm1_dist: LanguageModel, rm3_alpha: float
) -> LanguageModel:
    """(1 - alpha) * query model + alpha * relevance model, term by term."""
    if not 0.0 <= rm3_alpha <= 1.0:
        raise ValueError("rm3_alpha must be in [0, 1]")
    support = set(original_query_lm.probs) | set(rm1_dist.probs)
    return LanguageModel(
        {
            term: (1.0 - rm3_alpha) * original_query_lm.probs.get(term, 0.0)
            + rm3_alpha * rm1_dist.probs.get(term, 0.0)
            for term in sorted(support)
        }
    )


def expand_query(
    index: InvertedIndex, query_terms: Sequence[str], params: Rm3Params
) -> ExpandedQuery:
    """RM3 expansion: rm1, interpolate, truncate, renormalize.

    Keeps every original query term plus the fb_terms highest-probability
    expansion terms (ties break on ascending term), then renormalizes so the
    weights form a distribution ready for weighted BM25.
    """
    relevance = rm1(query_terms, index, params)
    interpolated = rm3_interpolate(query_lm(query_terms), relevance, params.rm3_alpha)

    originals = set(query_terms)
    expansion = [
        (term, p) for term, p in interpolated.probs.items() if term not in originals and p > 0.0
    ]
    expansion.sort(key=lambda item: (-item[1], item[0]))
    kept = {term for term, _ in expansion[: params.fb_terms]} | originals

    selected = {term: p for term, p in interpolated.probs.items() if term in kept}
    total = sum(selected.values())
    terms = [(term, p / total) for term, p in selected.items()]
    terms.sort(key=lambda item: (-item[1], item[0]))
    return ExpandedQuery(terms=terms)
