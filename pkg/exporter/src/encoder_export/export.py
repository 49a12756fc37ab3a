"""Run a pretrained encoder over keyed texts and export per-token vectors.

The encoder is left frozen and run in eval mode; records are processed in
fixed-size batches over the key-sorted record list, so repeated exports of
the same input produce identical files.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .emb1 import Emb1Record, write_emb1

log = logging.getLogger(__name__)


class ExportError(Exception):
    """Unusable input records, model, or export parameters."""


@dataclass(frozen=True)
class ExportJob:
    input_path: str
    model: str
    out_path: str
    layers: int = 2
    max_len: int = 512
    batch_size: int = 8

    def __post_init__(self):
        if self.layers < 1:
            raise ExportError("layers must be >= 1")
        if self.max_len < 1:
            raise ExportError("max_len must be >= 1")
        if self.batch_size < 1:
            raise ExportError("batch_size must be >= 1")


@dataclass
class Truncation:
    key: str
    full_tokens: int
    kept_tokens: int


@dataclass
class ExportResult:
    out_path: str
    sidecar_path: str
    records: int
    layers: int
    dim: int
    truncations: list[Truncation] = field(default_factory=list)


def read_records(path) -> list[tuple[str, str]]:
    """JSONL records {"key": ..., "text": ...}, keys unique and non-empty."""
    records: list[tuple[str, str]] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ExportError(f"{path}: line {line_no}: {exc}") from None
            if not isinstance(record, dict) or "key" not in record or "text" not in record:
                raise ExportError(f"{path}: line {line_no}: expected {{'key', 'text'}}")
            key, text = str(record["key"]), str(record["text"])
            if not key:
                raise ExportError(f"{path}: line {line_no}: empty key")
            if key in seen:
                raise ExportError(f"{path}: line {line_no}: duplicate key '{key}'")
            seen.add(key)
            records.append((key, text))
    if not records:
        raise ExportError(f"{path}: no records")
    return records


def _load_encoder(name: str):
    # imported lazily so that reading/validating records stays cheap
    from transformers import AutoModel, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(name)
        model = AutoModel.from_pretrained(name)
    except Exception as exc:
        raise ExportError(f"cannot load model '{name}': {exc}") from exc
    model.eval()
    return tokenizer, model


def _hidden_dim(model) -> int:
    dim = getattr(model.config, "hidden_size", None)
    if dim is None:
        raise ExportError("model config does not expose a hidden size")
    return int(dim)


def sidecar_path(out_path: str) -> str:
    return f"{out_path}.truncated.log"


def export_embeddings(job: ExportJob) -> ExportResult:
    import torch

    records = sorted(read_records(job.input_path))
    tokenizer, model = _load_encoder(job.model)
    dim = _hidden_dim(model)

    exported: list[Emb1Record] = []
    truncations: list[Truncation] = []
    layer_count_checked = False

    for start in range(0, len(records), job.batch_size):
        batch = records[start : start + job.batch_size]

        # zero-token texts cannot go through the encoder; emit empty tensors
        keys: list[str] = []
        texts: list[str] = []
        full_lens: list[int] = []
        for key, text in batch:
            n_tokens = len(tokenizer(text)["input_ids"])
            if n_tokens == 0:
                exported.append(Emb1Record(
                    key=key, tokens=[],
                    vectors=np.zeros((job.layers, 0, dim), dtype=np.float32),
                ))
            else:
                keys.append(key)
                texts.append(text)
                full_lens.append(n_tokens)
        if not keys:
            continue
        encoded = tokenizer(
            texts, padding=True, truncation=True, max_length=job.max_len,
            return_tensors="pt",
        )
        with torch.no_grad():
            output = model(**encoded, output_hidden_states=True)
        hidden = output.hidden_states
        if not layer_count_checked:
            if job.layers > len(hidden):
                raise ExportError(
                    f"requested {job.layers} layers but the model exposes {len(hidden)}"
                )
            layer_count_checked = True
        # earlier-to-last so the final hidden state sits at layer index -1
        chosen = hidden[len(hidden) - job.layers :]

        for i, key in enumerate(keys):
            mask = encoded["attention_mask"][i].bool()
            ids = encoded["input_ids"][i][mask].tolist()
            tokens = tokenizer.convert_ids_to_tokens(ids)
            vectors = torch.stack([layer[i][mask] for layer in chosen], dim=0)
            exported.append(Emb1Record(
                key=key, tokens=tokens,
                vectors=vectors.to(torch.float32).cpu().numpy(),
            ))
            if full_lens[i] > len(ids):
                log.warning(
                    "record '%s' truncated from %d to %d tokens",
                    key, full_lens[i], len(ids),
                )
                truncations.append(Truncation(key, full_lens[i], len(ids)))

    write_emb1(job.out_path, exported)
    sidecar = sidecar_path(job.out_path)
    with open(sidecar, "w", encoding="utf-8") as handle:
        for t in truncations:
            handle.write(f"{t.key}\t{t.full_tokens}\t{t.kept_tokens}\n")
    return ExportResult(
        out_path=job.out_path,
        sidecar_path=sidecar,
        records=len(exported),
        layers=job.layers,
        dim=dim,
        truncations=truncations,
    )
