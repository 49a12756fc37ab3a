"""Token-embedding storage and the deterministic hash-embedding baseline.

Contextual token embeddings are externally produced; this module owns their
on-disk format and a self-contained stand-in. The hash baseline derives
each token vector from an FNV-1a hash of the token mixed through a
splitmix64 stream, so identical tokens always get identical unit-norm
vectors for a given seed and layer, on every platform and run.

Embedding file layout (magic "EMB1", all little-endian):
    u32 version = 1, u32 layer count L, u32 dimension d, u64 record count,
    then per record sorted by key:
        u32-length-prefixed UTF-8 key,
        u32 token count T,
        T u32-length-prefixed UTF-8 tokens,
        L*T*d f32 values in [layer][token][dim] order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from . import binio
from .errors import DimensionError, FormatError, MissingEmbeddingError
from .index import tokenize

EMBEDDING_MAGIC = b"EMB1"
EMBEDDING_VERSION = 1
SEP_TOKEN = "[SEP]"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_SPLITMIX_GOLDEN = 0x9E3779B97F4A7C15
_U64 = (1 << 64) - 1


@dataclass
class TokenEmbeddings:
    """Per-token vectors for one text: float32 tensor [layers][tokens][dim]."""

    tokens: list[str]
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float32)
        if self.vectors.ndim != 3:
            raise DimensionError(f"vectors must be 3-d, got shape {self.vectors.shape}")
        if self.vectors.shape[1] != len(self.tokens):
            raise DimensionError(
                f"token axis {self.vectors.shape[1]} != token count {len(self.tokens)}"
            )
        if not np.all(np.isfinite(self.vectors)):
            raise DimensionError("vectors contain non-finite values")

    @property
    def layers(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[2]

    def __len__(self) -> int:
        return len(self.tokens)

    def last_layer(self) -> np.ndarray:
        return self.vectors[-1]

    def last_two_concat(self) -> np.ndarray:
        """Per-token concatenation of (last, second-to-last) layers."""
        if self.layers < 2:
            raise DimensionError("concat variant needs at least 2 stored layers")
        return np.concatenate([self.vectors[-1], self.vectors[-2]], axis=1)


@dataclass
class EmbeddingFile:
    records: dict[str, TokenEmbeddings]
    layers: int
    dim: int


def fnv1a64(data: bytes) -> int:
    value = _FNV_OFFSET
    for byte in data:
        value ^= byte
        value = (value * _FNV_PRIME) & _U64
    return value


def _splitmix_uniform(state0: np.ndarray, dim: int) -> np.ndarray:
    """Rows of uniform [-1, 1) values from per-row splitmix64 streams."""
    steps = np.arange(1, dim + 1, dtype=np.uint64)
    z = state0[:, None] + steps[None, :] * _SPLITMIX_GOLDEN
    z = (z ^ (z >> np.uint64(30))) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> np.uint64(27))) * 0x94D049BB133111EB
    z = z ^ (z >> np.uint64(31))
    unit = (z >> np.uint64(11)).astype(np.float64) * 2.0**-53
    return 2.0 * unit - 1.0


def hash_embed(tokens: list[str], dim: int, layers: int, seed: int) -> TokenEmbeddings:
    """Deterministic unit-norm vectors per (token, seed, layer)."""
    if dim < 1 or layers < 1:
        raise ValueError("dim and layers must be >= 1")
    unique: dict[str, int] = {}
    for token in tokens:
        unique.setdefault(token, len(unique))
    hashes = np.array(
        [fnv1a64(t.encode("utf-8")) for t in unique], dtype=np.uint64
    ).reshape(-1)

    out = np.zeros((layers, len(tokens), dim), dtype=np.float32)
    if tokens:
        positions = np.array([unique[t] for t in tokens], dtype=np.intp)
        for layer in range(layers):
            state0 = hashes ^ np.uint64((seed ^ layer) & _U64)
            raw = _splitmix_uniform(state0, dim)
            norms = np.linalg.norm(raw, axis=1, keepdims=True)
            norms[norms == 0.0] = 1.0
            out[layer] = (raw / norms).astype(np.float32)[positions]
    return TokenEmbeddings(tokens=list(tokens), vectors=out)


def _common_shape(records: Mapping[str, TokenEmbeddings]) -> tuple[int, int]:
    layers = dim = None
    for key, rec in records.items():
        if layers is None:
            layers, dim = rec.layers, rec.dim
        elif (rec.layers, rec.dim) != (layers, dim):
            raise DimensionError(
                f"record '{key}' has shape ({rec.layers}, {rec.dim}), "
                f"expected ({layers}, {dim})"
            )
    return (layers or 0, dim or 0)


def write_embedding_file(path, records: Mapping[str, TokenEmbeddings]) -> None:
    """Write records sorted by key; identical inputs give identical bytes."""
    layers, dim = _common_shape(records)
    with open(path, "wb") as handle:
        handle.write(EMBEDDING_MAGIC)
        handle.write(binio.pack_u32(EMBEDDING_VERSION))
        handle.write(binio.pack_u32(layers))
        handle.write(binio.pack_u32(dim))
        handle.write(binio.pack_u64(len(records)))
        for key in sorted(records):
            rec = records[key]
            handle.write(binio.pack_str_u32(key))
            handle.write(binio.pack_u32(len(rec.tokens)))
            for token in rec.tokens:
                handle.write(binio.pack_str_u32(token))
            handle.write(binio.pack_f32_array(rec.vectors))


def read_embedding_file(path) -> EmbeddingFile:
    with open(path, "rb") as handle:
        data = handle.read()
    reader = binio.ByteReader(data, name=str(path))
    magic = reader.take(4, "magic")
    if magic != EMBEDDING_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {EMBEDDING_MAGIC!r}")
    version = reader.read_u32("version")
    if version != EMBEDDING_VERSION:
        raise FormatError(f"{path}: unsupported embedding version {version}")
    layers = reader.read_u32("layer count")
    dim = reader.read_u32("dimension")
    count = reader.read_u64("record count")

    records: dict[str, TokenEmbeddings] = {}
    for _ in range(count):
        key = reader.read_str_u32("record key")
        if key in records:
            raise FormatError(f"{path}: duplicate record key '{key}'")
        n_tokens = reader.read_u32("token count")
        tokens = [reader.read_str_u32("token") for _ in range(n_tokens)]
        values = reader.read_f32_array(layers * n_tokens * dim, f"tensor for '{key}'")
        records[key] = TokenEmbeddings(
            tokens=tokens, vectors=values.reshape(layers, n_tokens, dim)
        )
    reader.expect_exhausted()
    return EmbeddingFile(records=records, layers=layers, dim=dim)


def lookup(provider, key: str) -> TokenEmbeddings:
    """Fetch one record from any provider; see provider classes for errors."""
    return provider.lookup(key)


class HashEmbeddingProvider:
    """Synthesizes embeddings on demand from stored texts.

    Query keys map to "query description" text; the joint sequence for the
    regression scorers inserts [SEP] tokens between query, description, and
    segment, mirroring how a real encoder would see the input.
    """

    def __init__(
        self,
        texts: Mapping[str, str],
        dim: int = 64,
        layers: int = 2,
        seed: int = 0,
        query_parts: Mapping[str, tuple[str, str]] | None = None,
    ):
        self.texts = dict(texts)
        self.dim = dim
        self.layers = layers
        self.seed = seed
        self.query_parts = dict(query_parts or {})
        self._cache: dict[str, TokenEmbeddings] = {}
        self._sep: TokenEmbeddings | None = None

    @classmethod
    def for_run(cls, queries, segments, dim: int = 64, layers: int = 2, seed: int = 0):
        """Build from Query objects and Segment objects."""
        texts = {s.segment_id: s.text for s in segments}
        parts = {}
        for q in queries:
            texts[q.qid] = f"{q.query} {q.description}".strip()
            parts[q.qid] = (q.query, q.description)
        return cls(texts, dim=dim, layers=layers, seed=seed, query_parts=parts)

    def embed_tokens(self, tokens: list[str]) -> TokenEmbeddings:
        return hash_embed(tokens, self.dim, self.layers, self.seed)

    def lookup(self, key: str) -> TokenEmbeddings:
        if key not in self.texts:
            raise MissingEmbeddingError(f"no stored text for key '{key}'")
        if key not in self._cache:
            self._cache[key] = self.embed_tokens(tokenize(self.texts[key]))
        return self._cache[key]

    def query_embedding(self, qid: str) -> TokenEmbeddings:
        return self.lookup(qid)

    def segment_embedding(self, segment_id: str) -> TokenEmbeddings:
        return self.lookup(segment_id)

    def _sep_embedding(self) -> TokenEmbeddings:
        if self._sep is None:
            self._sep = self.embed_tokens([SEP_TOKEN])
        return self._sep

    def joint_embedding(self, qid: str, segment_id: str) -> TokenEmbeddings:
        """query [SEP] description [SEP] segment, as one token sequence."""
        if qid in self.query_parts:
            query, description = self.query_parts[qid]
            key = f"__joint_query__{qid}"
            if key not in self._cache:
                self._cache[key] = self.embed_tokens(
                    tokenize(query) + [SEP_TOKEN] + tokenize(description)
                )
            head = self._cache[key]
        else:
            head = self.query_embedding(qid)
        sep = self._sep_embedding()
        seg = self.segment_embedding(segment_id)
        return concat_embeddings([head, sep, seg])


class FileEmbeddingProvider:
    """Serves records from an embedding file loaded into memory.

    The joint sequence for a (query, segment) pair prefers an explicit
    record under the key "<qid>::<segment_id>"; otherwise it concatenates
    the query and segment records (no separator vectors are available in a
    file).
    """

    def __init__(self, embeddings: EmbeddingFile):
        self.embeddings = embeddings

    @property
    def dim(self) -> int:
        return self.embeddings.dim

    @property
    def layers(self) -> int:
        return self.embeddings.layers

    @classmethod
    def from_path(cls, path):
        return cls(read_embedding_file(path))

    def lookup(self, key: str) -> TokenEmbeddings:
        try:
            return self.embeddings.records[key]
        except KeyError:
            raise MissingEmbeddingError(f"no embedding record for key '{key}'") from None

    def query_embedding(self, qid: str) -> TokenEmbeddings:
        return self.lookup(qid)

    def segment_embedding(self, segment_id: str) -> TokenEmbeddings:
        return self.lookup(segment_id)

    def joint_embedding(self, qid: str, segment_id: str) -> TokenEmbeddings:
        joint_key = f"{qid}::{segment_id}"
        if joint_key in self.embeddings.records:
            return self.embeddings.records[joint_key]
        return concat_embeddings([self.lookup(qid), self.lookup(segment_id)])


def concat_embeddings(parts: Iterable[TokenEmbeddings]) -> TokenEmbeddings:
    """Concatenate token sequences along the token axis."""
    parts = list(parts)
    if not parts:
        raise ValueError("need at least one part")
    _common_shape({str(i): p for i, p in enumerate(parts)})
    tokens: list[str] = []
    for p in parts:
        tokens.extend(p.tokens)
    vectors = np.concatenate([p.vectors for p in parts], axis=1)
    return TokenEmbeddings(tokens=tokens, vectors=vectors)
