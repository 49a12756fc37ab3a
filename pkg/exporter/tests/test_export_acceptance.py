"""Acceptance gate for the exporter.

Two criteria, each printing one PASS/FAIL line:
  1. An exported file loads through the consumer's embedding reader with
     zero errors and matches the input record set.
  2. A full ranking pipeline run on a ten-episode sample, fed only by the
     exported embeddings, completes and produces a well-formed run file.
"""

import json
import os
import time
from contextlib import contextmanager

import numpy as np

import podrank.cli
from encoder_export.cli import main as export_main
from podrank.embedding import read_embedding_file
from podrank.trec_eval import read_run


@contextmanager
def _criterion(name, budget_s):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"FAIL {name}")
        raise
    elapsed = time.perf_counter() - start
    print(f"PASS {name} ({elapsed:.2f}s, budget {budget_s}s)")
    assert elapsed < budget_s


def _export(sample_dataset, tiny_encoder, out_path):
    code = export_main([
        "--input", sample_dataset["records"],
        "--model", tiny_encoder,
        "--layers", "2",
        "--out", out_path,
    ])
    assert code == 0
    return out_path


def test_exported_file_loads_cleanly(sample_dataset, tiny_encoder, tmp_path):
    with _criterion("exported file accepted by consumer reader", 60):
        emb_path = _export(sample_dataset, tiny_encoder, str(tmp_path / "sample.emb"))

        loaded = read_embedding_file(emb_path)

        expected_keys = set()
        with open(sample_dataset["records"], encoding="utf-8") as handle:
            for line in handle:
                expected_keys.add(json.loads(line)["key"])
        assert set(loaded.records) == expected_keys
        assert loaded.layers == 2
        assert loaded.dim >= 1
        for rec in loaded.records.values():
            assert rec.vectors.shape == (loaded.layers, len(rec.tokens), loaded.dim)
            assert np.all(np.isfinite(rec.vectors))


def test_pipeline_completes_on_exported_embeddings(sample_dataset, tiny_encoder, tmp_path):
    with _criterion("pipeline run over exported embeddings", 120):
        emb_path = _export(sample_dataset, tiny_encoder, str(tmp_path / "sample.emb"))

        out_dir = str(tmp_path / "run")
        code = podrank.cli.main([
            "pipeline",
            "--corpus", sample_dataset["corpus"],
            "--queries", sample_dataset["queries"],
            "--qrels", sample_dataset["qrels"],
            "--out-dir", out_dir,
            "--provider", f"file:{emb_path}",
            "--first-stage-k", "10",
            "--seed", "42",
            "--tag", "exported",
        ])
        assert code == 0

        final = read_run(os.path.join(out_dir, "final.run"))
        assert len(final.rows) > 0
        assert final.qids() == ["q1"]
        assert os.path.exists(os.path.join(out_dir, "metrics.txt"))
