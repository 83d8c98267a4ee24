"""Note-to-embedding export: split into sentences, encode, mean-pool."""

from __future__ import annotations

import csv
import warnings

import numpy as np

from .cemb import write_cemb
from .encoders import resolve_encoder
from .segmentation import segment_sentences


def read_notes_csv(path) -> list[tuple[int, str]]:
    """Read an `id,text` CSV; ids must be unique and contiguous from 0."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"id", "text"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: notes CSV needs 'id' and 'text' columns")
        records = []
        for row in reader:
            try:
                note_id = int(row["id"])
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}: non-integer id {row['id']!r}") from exc
            records.append((note_id, row["text"] or ""))
    ids = [i for i, _ in records]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate note ids")
    records.sort(key=lambda r: r[0])
    if ids and [i for i, _ in records] != list(range(len(records))):
        raise ValueError(
            f"{path}: ids must be contiguous 0..{len(records) - 1} to match the "
            "tabular dataset's row order"
        )
    return records


def encode_notes(notes: list[tuple[int, str]], encoder) -> np.ndarray:
    """Mean-pooled sentence embeddings, one row per note in id order.

    All sentences are encoded in one pass (the encoders are deterministic per
    sentence, so batching does not change any vector); empty notes produce a
    zero row and a warning.
    """
    per_note: list[list[str]] = []
    flat: list[str] = []
    for note_id, text in notes:
        sentences = segment_sentences(text)
        if not sentences:
            warnings.warn(f"note {note_id} is empty; writing a zero vector")
        per_note.append(sentences)
        flat.extend(sentences)
    vectors = encoder.encode(flat)
    out = np.zeros((len(notes), encoder.width), dtype=np.float32)
    cursor = 0
    for row, sentences in enumerate(per_note):
        if sentences:
            block = vectors[cursor : cursor + len(sentences)]
            out[row] = block.mean(axis=0, dtype=np.float64).astype(np.float32)
            cursor += len(sentences)
    return out


def export_embeddings(
    notes_path, model_identifier: str, out_path, batch_size: int = 32
) -> np.ndarray:
    """Full pipeline: notes CSV -> CEMB file. Returns the written matrix."""
    notes = read_notes_csv(notes_path)
    if not notes:
        raise ValueError(f"{notes_path}: no notes to export")
    encoder = resolve_encoder(model_identifier, batch_size)
    matrix = encode_notes(notes, encoder)
    write_cemb(matrix, out_path)
    return matrix
