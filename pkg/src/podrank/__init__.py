"""Two-stage podcast ranking: lexical episode retrieval, neural segment
reranking, and score fusion, with TREC-style evaluation tooling."""

from .corpus import Episode, Query, Segment, SegmentationConfig, segment_episode
from .embedding import (
    HashEmbeddingProvider,
    FileEmbeddingProvider,
    TokenEmbeddings,
    hash_embed,
    read_embedding_file,
    write_embedding_file,
)
from .errors import PodrankError
from .fusion import FusionParams, fuse, fuse_ranked
from .index import Bm25Params, InvertedIndex, RankedList, bm25_score, build_index, search, tokenize
from .prf import Rm3Params, expand_query
from .rerank import (
    KernelBank,
    RegressionHead,
    ScoringHead,
    TrainConfig,
    grad_check,
    kernel_pool,
    similarity_matrix,
    train_head,
)
from .trec_eval import Qrels, RunFile, evaluate, ndcg_at_k, precision_at_k

__version__ = "0.1.0"

__all__ = [
    "Bm25Params",
    "Episode",
    "FileEmbeddingProvider",
    "FusionParams",
    "HashEmbeddingProvider",
    "InvertedIndex",
    "KernelBank",
    "PodrankError",
    "Qrels",
    "Query",
    "RankedList",
    "RegressionHead",
    "Rm3Params",
    "RunFile",
    "ScoringHead",
    "Segment",
    "SegmentationConfig",
    "TokenEmbeddings",
    "TrainConfig",
    "bm25_score",
    "build_index",
    "evaluate",
    "expand_query",
    "fuse",
    "fuse_ranked",
    "grad_check",
    "hash_embed",
    "kernel_pool",
    "ndcg_at_k",
    "precision_at_k",
    "read_embedding_file",
    "search",
    "segment_episode",
    "similarity_matrix",
    "tokenize",
    "train_head",
    "write_embedding_file",
]
