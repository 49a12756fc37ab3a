"""Writer for the EMB1 binary embedding format.

Layout, all little-endian:

    magic   4 bytes  b"EMB1"
    version u32      1
    layers  u32      L
    dim     u32      d
    count   u64      number of records
    then per record, sorted by key:
        key      u32 length + utf-8 bytes
        n_tokens u32
        tokens   n_tokens x (u32 length + utf-8 bytes)
        values   L * n_tokens * d float32, layer-major then token then dim

This module implements the format from its byte layout alone; the reading
side lives with the consumer.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"EMB1"
VERSION = 1


class Emb1Error(Exception):
    """A record set cannot be serialized as EMB1."""


@dataclass(frozen=True)
class Emb1Record:
    key: str
    tokens: list[str]
    # float32 [layers][tokens][dim]
    vectors: np.ndarray


def _pack_str(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def write_emb1(path, records: list[Emb1Record]) -> None:
    """Write records sorted by key; identical inputs produce identical bytes."""
    by_key: dict[str, Emb1Record] = {}
    layers = dim = None
    for rec in records:
        if rec.key in by_key:
            raise Emb1Error(f"duplicate record key '{rec.key}'")
        vectors = np.ascontiguousarray(rec.vectors, dtype=np.float32)
        if vectors.ndim != 3 or vectors.shape[1] != len(rec.tokens):
            raise Emb1Error(
                f"record '{rec.key}': tensor shape {vectors.shape} does not match "
                f"{len(rec.tokens)} tokens"
            )
        if not np.all(np.isfinite(vectors)):
            raise Emb1Error(f"record '{rec.key}': non-finite values")
        if layers is None:
            layers, dim = vectors.shape[0], vectors.shape[2]
        elif (vectors.shape[0], vectors.shape[2]) != (layers, dim):
            raise Emb1Error(
                f"record '{rec.key}' has shape ({vectors.shape[0]}, {vectors.shape[2]}), "
                f"expected ({layers}, {dim})"
            )
        by_key[rec.key] = Emb1Record(rec.key, list(rec.tokens), vectors)

    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<I", VERSION))
        handle.write(struct.pack("<I", layers or 0))
        handle.write(struct.pack("<I", dim or 0))
        handle.write(struct.pack("<Q", len(by_key)))
        for key in sorted(by_key):
            rec = by_key[key]
            handle.write(_pack_str(key))
            handle.write(struct.pack("<I", len(rec.tokens)))
            for token in rec.tokens:
                handle.write(_pack_str(token))
            handle.write(rec.vectors.tobytes(order="C"))
