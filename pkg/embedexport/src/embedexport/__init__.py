"""embedexport: clinical-note text to CEMB embedding files."""

from .cemb import write_cemb
from .encoders import (
    MODEL_ALIASES,
    HashedEncoder,
    ModelResolutionError,
    SentenceTransformerEncoder,
    resolve_encoder,
)
from .exporter import encode_notes, export_embeddings, read_notes_csv
from .segmentation import segment_sentences

__version__ = "0.1.0"

__all__ = [
    "HashedEncoder",
    "MODEL_ALIASES",
    "ModelResolutionError",
    "SentenceTransformerEncoder",
    "encode_notes",
    "export_embeddings",
    "read_notes_csv",
    "resolve_encoder",
    "segment_sentences",
    "write_cemb",
]
