"""Frozen-encoder embedding export in the EMB1 interchange format."""

from .emb1 import Emb1Error, Emb1Record, write_emb1
from .export import (
    ExportError,
    ExportJob,
    ExportResult,
    Truncation,
    export_embeddings,
    read_records,
    sidecar_path,
)

__all__ = [
    "Emb1Error",
    "Emb1Record",
    "ExportError",
    "ExportJob",
    "ExportResult",
    "Truncation",
    "export_embeddings",
    "read_records",
    "sidecar_path",
    "write_emb1",
]
