import csv

import numpy as np
import pytest

from embedexport import cli
from embedexport.encoders import HashedEncoder, ModelResolutionError, resolve_encoder
from embedexport.exporter import export_embeddings, read_notes_csv


def write_notes(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "text"])
        writer.writerows(rows)


class TestHashedEncoder:
    def test_shape_and_norm(self):
        enc = HashedEncoder(width=64)
        vectors = enc.encode(["fever and cough", "clear lungs"])
        assert vectors.shape == (2, 64)
        assert vectors.dtype == np.float32
        assert np.allclose(np.linalg.norm(vectors, axis=1), 1.0, atol=1e-6)

    def test_deterministic(self):
        enc = HashedEncoder()
        a = enc.encode(["patient reports dyspnea"])
        b = enc.encode(["patient reports dyspnea"])
        assert np.array_equal(a, b)

    def test_distinct_sentences_differ(self):
        enc = HashedEncoder()
        a, b = enc.encode(["severe cough tonight", "no complaints at all"])
        assert not np.array_equal(a, b)

    def test_empty_sentence_is_zero(self):
        enc = HashedEncoder(width=16)
        assert np.array_equal(enc.encode(["..."]), np.zeros((1, 16), dtype=np.float32))


class TestResolveEncoder:
    def test_hashed_with_width(self):
        assert resolve_encoder("hashed:128").width == 128

    def test_unknown_identifier(self):
        with pytest.raises(ModelResolutionError, match="unknown model"):
            resolve_encoder("gibberish")

    def test_bad_width(self):
        with pytest.raises(ModelResolutionError):
            resolve_encoder("hashed:zero")

    def test_alias_table_covers_paper_encoders(self):
        from embedexport.encoders import MODEL_ALIASES

        assert MODEL_ALIASES["biolord"].startswith("st:")
        assert MODEL_ALIASES["mpnet"].startswith("st:")

    def test_sentence_transformer_backend_if_available(self):
        try:
            encoder = resolve_encoder("mpnet")
        except ModelResolutionError:
            pytest.skip("no sentence-transformers model cache/network available")
        vectors = encoder.encode(["patient doing well"])
        assert vectors.shape == (1, encoder.width)


class TestExport:
    def test_single_sentence_note_equals_its_embedding(self, tmp_path):
        notes = tmp_path / "notes.csv"
        write_notes(notes, [(0, "Fever noted today.")])
        matrix = export_embeddings(notes, "hashed", tmp_path / "out.cemb")
        direct = HashedEncoder().encode(["Fever noted today."])
        assert np.array_equal(matrix, direct)

    def test_two_sentence_mean_pooling(self, tmp_path):
        first = "Fever noted on arrival."
        second = "Cough has been present for days."
        notes = tmp_path / "notes.csv"
        write_notes(notes, [(0, f"{first} {second}")])
        pooled = export_embeddings(notes, "hashed", tmp_path / "pooled.cemb")

        singles = tmp_path / "singles.csv"
        write_notes(singles, [(0, first), (1, second)])
        parts = export_embeddings(singles, "hashed", tmp_path / "parts.cemb")
        assert np.max(np.abs(pooled[0] - (parts[0] + parts[1]) / 2.0)) <= 1e-5

    def test_empty_note_zero_row_with_warning(self, tmp_path):
        notes = tmp_path / "notes.csv"
        write_notes(notes, [(0, "Fine."), (1, "")])
        with pytest.warns(UserWarning, match="note 1"):
            matrix = export_embeddings(notes, "hashed:32", tmp_path / "o.cemb")
        assert np.array_equal(matrix[1], np.zeros(32, dtype=np.float32))

    def test_rows_written_in_id_order(self, tmp_path):
        notes = tmp_path / "notes.csv"
        write_notes(notes, [(1, "Second note."), (0, "First note.")])
        matrix = export_embeddings(notes, "hashed", tmp_path / "o.cemb")
        direct = HashedEncoder().encode(["First note.", "Second note."])
        assert np.array_equal(matrix, direct)

    def test_ids_must_be_contiguous(self, tmp_path):
        notes = tmp_path / "notes.csv"
        write_notes(notes, [(0, "a."), (2, "b.")])
        with pytest.raises(ValueError, match="contiguous"):
            read_notes_csv(notes)

    def test_duplicate_ids_rejected(self, tmp_path):
        notes = tmp_path / "notes.csv"
        write_notes(notes, [(0, "a."), (0, "b.")])
        with pytest.raises(ValueError, match="duplicate"):
            read_notes_csv(notes)

    def test_missing_columns_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n", encoding="utf-8")
        with pytest.raises(ValueError, match="columns"):
            read_notes_csv(path)


class TestCli:
    def test_export_roundtrip(self, tmp_path, capsys):
        notes = tmp_path / "notes.csv"
        write_notes(notes, [(0, "Feeling fine."), (1, "Bad cough. Mild fever.")])
        out = tmp_path / "emb.cemb"
        code = cli.main(["export", "--notes", str(notes), "--model", "hashed:64", "--out", str(out)])
        assert code == 0
        assert "2 x 64" in capsys.readouterr().out
        assert out.read_bytes()[:4] == b"CEMB"

    def test_unresolvable_model_exits_2(self, tmp_path):
        notes = tmp_path / "notes.csv"
        write_notes(notes, [(0, "x.")])
        assert cli.main(["export", "--notes", str(notes), "--model", "nope", "--out", str(tmp_path / "o")]) == 2

    def test_missing_notes_exits_1(self, tmp_path):
        assert cli.main(["export", "--notes", str(tmp_path / "gone.csv"), "--out", str(tmp_path / "o")]) == 1
