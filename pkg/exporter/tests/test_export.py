"""Record parsing, EMB1 writing, encoder export behavior, and the CLI.

The consumer's file reader serves as the independent check on everything
the writer produces.
"""

import json
import logging

import numpy as np
import pytest

from encoder_export import (
    Emb1Error,
    Emb1Record,
    ExportError,
    ExportJob,
    export_embeddings,
    read_records,
    sidecar_path,
    write_emb1,
)
from encoder_export.cli import main
from podrank.embedding import read_embedding_file


def _write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row) + "\n")
    return str(path)


class TestReadRecords:
    def test_reads_keys_and_texts_in_file_order(self, tmp_path):
        path = _write_jsonl(tmp_path / "r.jsonl", [
            {"key": "b", "text": "second"},
            {"key": "a", "text": "first"},
        ])
        assert read_records(path) == [("b", "second"), ("a", "first")]

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "r.jsonl"
        path.write_text('{"key": "a", "text": "x"}\n\n  \n', encoding="utf-8")
        assert read_records(path) == [("a", "x")]

    def test_missing_field_names_line(self, tmp_path):
        path = _write_jsonl(tmp_path / "r.jsonl", [
            {"key": "a", "text": "x"},
            {"key": "b"},
        ])
        with pytest.raises(ExportError, match="line 2"):
            read_records(path)

    def test_invalid_json_names_line(self, tmp_path):
        path = tmp_path / "r.jsonl"
        path.write_text('{"key": "a", "text": "x"}\nnot json\n', encoding="utf-8")
        with pytest.raises(ExportError, match="line 2"):
            read_records(path)

    def test_non_object_line_rejected(self, tmp_path):
        path = tmp_path / "r.jsonl"
        path.write_text("[1, 2]\n", encoding="utf-8")
        with pytest.raises(ExportError, match="expected"):
            read_records(path)

    def test_duplicate_key_rejected(self, tmp_path):
        path = _write_jsonl(tmp_path / "r.jsonl", [
            {"key": "a", "text": "x"},
            {"key": "a", "text": "y"},
        ])
        with pytest.raises(ExportError, match="duplicate key 'a'"):
            read_records(path)

    def test_empty_key_rejected(self, tmp_path):
        path = _write_jsonl(tmp_path / "r.jsonl", [{"key": "", "text": "x"}])
        with pytest.raises(ExportError, match="empty key"):
            read_records(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "r.jsonl"
        path.write_text("", encoding="utf-8")
        with pytest.raises(ExportError, match="no records"):
            read_records(path)


class TestExportJob:
    def test_defaults(self):
        job = ExportJob(input_path="in", model="m", out_path="out")
        assert (job.layers, job.max_len, job.batch_size) == (2, 512, 8)

    @pytest.mark.parametrize("field", ["layers", "max_len", "batch_size"])
    def test_positive_parameters_required(self, field):
        with pytest.raises(ExportError, match=field):
            ExportJob(input_path="in", model="m", out_path="out", **{field: 0})


class TestWriteEmb1:
    def _records(self, rng, layers=2, dim=4):
        return [
            Emb1Record(
                key=f"k{i}",
                tokens=[f"t{j}" for j in range(i + 1)],
                vectors=rng.normal(size=(layers, i + 1, dim)).astype(np.float32),
            )
            for i in range(3)
        ]

    def test_round_trip_through_consumer_reader(self, tmp_path):
        rng = np.random.default_rng(0)
        records = self._records(rng)
        path = tmp_path / "x.emb"
        write_emb1(path, records)
        loaded = read_embedding_file(path)
        assert loaded.layers == 2 and loaded.dim == 4
        assert set(loaded.records) == {r.key for r in records}
        for rec in records:
            got = loaded.records[rec.key]
            assert got.tokens == rec.tokens
            np.testing.assert_array_equal(got.vectors, rec.vectors)

    def test_input_order_does_not_change_bytes(self, tmp_path):
        rng = np.random.default_rng(1)
        records = self._records(rng)
        a, b = tmp_path / "a.emb", tmp_path / "b.emb"
        write_emb1(a, records)
        write_emb1(b, list(reversed(records)))
        assert a.read_bytes() == b.read_bytes()

    def test_zero_token_record_round_trips(self, tmp_path):
        rec = Emb1Record(key="e", tokens=[], vectors=np.zeros((2, 0, 4), np.float32))
        path = tmp_path / "x.emb"
        write_emb1(path, [rec])
        loaded = read_embedding_file(path)
        assert loaded.records["e"].tokens == []
        assert loaded.records["e"].vectors.shape == (2, 0, 4)

    def test_empty_record_list(self, tmp_path):
        path = tmp_path / "x.emb"
        write_emb1(path, [])
        assert read_embedding_file(path).records == {}

    def test_duplicate_keys_rejected(self, tmp_path):
        rec = Emb1Record(key="a", tokens=["t"], vectors=np.zeros((1, 1, 2), np.float32))
        with pytest.raises(Emb1Error, match="duplicate record key 'a'"):
            write_emb1(tmp_path / "x.emb", [rec, rec])

    def test_token_count_mismatch_rejected(self, tmp_path):
        rec = Emb1Record(key="a", tokens=["t"], vectors=np.zeros((1, 2, 2), np.float32))
        with pytest.raises(Emb1Error, match="'a'"):
            write_emb1(tmp_path / "x.emb", [rec])

    def test_non_finite_rejected(self, tmp_path):
        vectors = np.full((1, 1, 2), np.nan, np.float32)
        rec = Emb1Record(key="a", tokens=["t"], vectors=vectors)
        with pytest.raises(Emb1Error, match="non-finite"):
            write_emb1(tmp_path / "x.emb", [rec])

    def test_inconsistent_shapes_rejected(self, tmp_path):
        recs = [
            Emb1Record(key="a", tokens=["t"], vectors=np.zeros((1, 1, 2), np.float32)),
            Emb1Record(key="b", tokens=["t"], vectors=np.zeros((2, 1, 2), np.float32)),
        ]
        with pytest.raises(Emb1Error, match="'b'"):
            write_emb1(tmp_path / "x.emb", recs)


class TestExportEmbeddings:
    def _job(self, tmp_path, tiny_encoder, rows, **kwargs):
        records = _write_jsonl(tmp_path / "records.jsonl", rows)
        return ExportJob(
            input_path=records,
            model=tiny_encoder,
            out_path=str(tmp_path / "out.emb"),
            **kwargs,
        )

    def test_readable_by_consumer_with_expected_shapes(self, tmp_path, tiny_encoder):
        job = self._job(tmp_path, tiny_encoder, [
            {"key": "a", "text": "hello world"},
            {"key": "b", "text": "quick brown fox"},
        ])
        result = export_embeddings(job)
        assert (result.records, result.layers, result.dim) == (2, 2, 16)
        loaded = read_embedding_file(job.out_path)
        assert loaded.layers == 2 and loaded.dim == 16
        assert set(loaded.records) == {"a", "b"}
        assert loaded.records["a"].tokens == ["hello", "world"]
        assert loaded.records["b"].vectors.shape == (2, 3, 16)
        for rec in loaded.records.values():
            assert np.all(np.isfinite(rec.vectors))

    def test_unknown_words_surface_as_unk_tokens(self, tmp_path, tiny_encoder):
        job = self._job(tmp_path, tiny_encoder, [
            {"key": "a", "text": "hello zzzunseen"},
        ])
        export_embeddings(job)
        loaded = read_embedding_file(job.out_path)
        assert loaded.records["a"].tokens == ["hello", "[UNK]"]

    def test_repeat_export_byte_identical(self, tmp_path, tiny_encoder):
        rows = [
            {"key": "a", "text": "hello world one two"},
            {"key": "b", "text": "lazy dog"},
        ]
        first = self._job(tmp_path, tiny_encoder, rows)
        export_embeddings(first)
        again = ExportJob(
            input_path=first.input_path, model=tiny_encoder,
            out_path=str(tmp_path / "again.emb"),
        )
        export_embeddings(again)
        with open(first.out_path, "rb") as f1, open(again.out_path, "rb") as f2:
            assert f1.read() == f2.read()

    def test_layer_slice_keeps_final_layer_last(self, tmp_path, tiny_encoder):
        rows = [{"key": "a", "text": "hello world three"}]
        deep = self._job(tmp_path, tiny_encoder, rows, layers=3)
        export_embeddings(deep)
        shallow = ExportJob(
            input_path=deep.input_path, model=tiny_encoder,
            out_path=str(tmp_path / "one.emb"), layers=1,
        )
        export_embeddings(shallow)
        top = read_embedding_file(deep.out_path).records["a"].vectors
        only = read_embedding_file(shallow.out_path).records["a"].vectors
        np.testing.assert_array_equal(top[-1], only[0])

    def test_requesting_more_layers_than_model_has_fails(self, tmp_path, tiny_encoder):
        job = self._job(tmp_path, tiny_encoder, [{"key": "a", "text": "hello"}], layers=5)
        with pytest.raises(ExportError, match="exposes"):
            export_embeddings(job)

    def test_truncation_logged_to_sidecar(self, tmp_path, tiny_encoder, caplog):
        job = self._job(tmp_path, tiny_encoder, [
            {"key": "long", "text": "one two three hello world dog"},
            {"key": "short", "text": "lazy dog"},
        ], max_len=3)
        with caplog.at_level(logging.WARNING, logger="encoder_export.export"):
            result = export_embeddings(job)
        loaded = read_embedding_file(job.out_path)
        assert loaded.records["long"].tokens == ["one", "two", "three"]
        assert loaded.records["short"].tokens == ["lazy", "dog"]
        assert [(t.key, t.full_tokens, t.kept_tokens) for t in result.truncations] == [
            ("long", 6, 3)
        ]
        lines = open(result.sidecar_path, encoding="utf-8").read().splitlines()
        assert lines == ["long\t6\t3"]
        assert "truncated" in caplog.text and "long" in caplog.text

    def test_sidecar_written_empty_without_truncation(self, tmp_path, tiny_encoder):
        job = self._job(tmp_path, tiny_encoder, [{"key": "a", "text": "hello"}])
        result = export_embeddings(job)
        assert result.sidecar_path == sidecar_path(job.out_path)
        assert open(result.sidecar_path, encoding="utf-8").read() == ""
        assert result.truncations == []

    def test_empty_text_yields_zero_token_record(self, tmp_path, tiny_encoder):
        job = self._job(tmp_path, tiny_encoder, [
            {"key": "empty", "text": ""},
            {"key": "full", "text": "hello"},
        ])
        export_embeddings(job)
        loaded = read_embedding_file(job.out_path)
        assert loaded.records["empty"].tokens == []
        assert loaded.records["empty"].vectors.shape == (2, 0, 16)
        assert loaded.records["full"].vectors.shape == (2, 1, 16)

    def test_batch_size_does_not_change_values(self, tmp_path, tiny_encoder):
        rows = [
            {"key": "a", "text": "hello world one two three"},
            {"key": "b", "text": "lazy dog"},
            {"key": "c", "text": "quick brown fox jumps"},
        ]
        single = self._job(tmp_path, tiny_encoder, rows, batch_size=1)
        export_embeddings(single)
        batched = ExportJob(
            input_path=single.input_path, model=tiny_encoder,
            out_path=str(tmp_path / "batched.emb"), batch_size=8,
        )
        export_embeddings(batched)
        left = read_embedding_file(single.out_path).records
        right = read_embedding_file(batched.out_path).records
        assert set(left) == set(right)
        for key in left:
            assert left[key].tokens == right[key].tokens
            np.testing.assert_allclose(
                left[key].vectors, right[key].vectors, rtol=1e-4, atol=1e-5
            )

    def test_unloadable_model_rejected(self, tmp_path):
        job = self._job(tmp_path, str(tmp_path / "no-such-model"), [
            {"key": "a", "text": "hello"},
        ])
        with pytest.raises(ExportError, match="cannot load model"):
            export_embeddings(job)


class TestCli:
    def _args(self, tmp_path, tiny_encoder, rows, *extra):
        records = _write_jsonl(tmp_path / "records.jsonl", rows)
        return [
            "--input", records, "--model", tiny_encoder,
            "--out", str(tmp_path / "cli.emb"), *extra,
        ]

    def test_success_reports_counts_and_paths(self, tmp_path, tiny_encoder, capsys):
        args = self._args(tmp_path, tiny_encoder, [
            {"key": "a", "text": "hello world"},
            {"key": "b", "text": "lazy dog"},
        ])
        assert main(args) == 0
        out = capsys.readouterr().out
        assert "exported 2 records" in out
        assert "0 truncated" in out
        emb = tmp_path / "cli.emb"
        assert emb.exists() and (tmp_path / "cli.emb.truncated.log").exists()
        assert set(read_embedding_file(emb).records) == {"a", "b"}

    def test_missing_required_flag_is_usage_error(self, tmp_path, capsys):
        assert main(["--input", str(tmp_path / "x"), "--model", "m"]) == 1
        assert "error" in capsys.readouterr().err

    def test_invalid_parameter_is_usage_error(self, tmp_path, tiny_encoder, capsys):
        args = self._args(tmp_path, tiny_encoder, [{"key": "a", "text": "x"}])
        assert main(args + ["--layers", "0"]) == 1
        assert "layers" in capsys.readouterr().err

    def test_missing_input_file_is_data_error(self, tmp_path, capsys):
        assert main([
            "--input", str(tmp_path / "absent.jsonl"), "--model", "m",
            "--out", str(tmp_path / "o.emb"),
        ]) == 2
        assert "error" in capsys.readouterr().err

    def test_unloadable_model_is_data_error(self, tmp_path, capsys):
        records = _write_jsonl(tmp_path / "r.jsonl", [{"key": "a", "text": "x"}])
        assert main([
            "--input", records, "--model", str(tmp_path / "absent-model"),
            "--out", str(tmp_path / "o.emb"),
        ]) == 2
        assert "cannot load model" in capsys.readouterr().err
