"""Sentence encoders behind one interface.

Two backends:

* ``hashed[:width]`` - a built-in deterministic feature-hashing encoder
  (word uni+bigrams hashed into signed buckets, L2-normalized). Needs no
  downloads, gives bit-identical vectors on every platform, and is the
  default for offline use and tests.
* ``st:<model-id>`` - any published sentence-transformers model. The aliases
  ``biolord`` and ``mpnet`` resolve to the biomedical encoder
  FremyCompany/BioLORD-2023 and its general-purpose base
  sentence-transformers/all-mpnet-base-v2.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

import numpy as np

DEFAULT_HASHED_WIDTH = 384

MODEL_ALIASES = {
    "biolord": "st:FremyCompany/BioLORD-2023",
    "mpnet": "st:sentence-transformers/all-mpnet-base-v2",
}

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class ModelResolutionError(ValueError):
    """The model identifier does not resolve to a usable encoder."""


@dataclass
class HashedEncoder:
    """Feature hashing of word uni- and bigrams into signed buckets."""

    width: int = DEFAULT_HASHED_WIDTH
    name: str = "hashed"

    def _bucket(self, feature: str) -> tuple[int, float]:
        digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
        value = int.from_bytes(digest, "little")
        return (value >> 1) % self.width, 1.0 if value & 1 else -1.0

    def encode(self, sentences: list[str]) -> np.ndarray:
        out = np.zeros((len(sentences), self.width), dtype=np.float32)
        for row, sentence in enumerate(sentences):
            tokens = _TOKEN_RE.findall(sentence.lower())
            features = tokens + [f"{a}_{b}" for a, b in zip(tokens, tokens[1:])]
            for feature in features:
                bucket, sign = self._bucket(feature)
                out[row, bucket] += sign
            norm = float(np.linalg.norm(out[row]))
            if norm > 0.0:
                out[row] /= norm
        return out


class SentenceTransformerEncoder:
    """Thin wrapper over sentence-transformers (optional dependency)."""

    def __init__(self, model_id: str, batch_size: int = 32):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise ModelResolutionError(
                f"model {model_id!r} needs the sentence-transformers extra "
                "(pip install embedexport[st])"
            ) from exc
        try:
            self._model = SentenceTransformer(model_id)
        except Exception as exc:
            raise ModelResolutionError(
                f"could not load sentence encoder {model_id!r}: {exc}"
            ) from exc
        self.name = model_id
        self.batch_size = batch_size
        self.width = int(self._model.get_sentence_embedding_dimension())

    def encode(self, sentences: list[str]) -> np.ndarray:
        if not sentences:
            return np.zeros((0, self.width), dtype=np.float32)
        vectors = self._model.encode(
            sentences,
            batch_size=self.batch_size,
            convert_to_numpy=True,
            show_progress_bar=False,
        )
        return np.asarray(vectors, dtype=np.float32)


def resolve_encoder(identifier: str, batch_size: int = 32):
    """Turn a model identifier or alias into an encoder instance."""
    identifier = MODEL_ALIASES.get(identifier.lower(), identifier)
    if identifier == "hashed":
        return HashedEncoder()
    if identifier.startswith("hashed:"):
        try:
            width = int(identifier.split(":", 1)[1])
        except ValueError as exc:
            raise ModelResolutionError(f"bad hashed width in {identifier!r}") from exc
        if width < 1:
            raise ModelResolutionError("hashed width must be >= 1")
        return HashedEncoder(width=width)
    if identifier.startswith("st:"):
        return SentenceTransformerEncoder(identifier[3:], batch_size)
    raise ModelResolutionError(
        f"unknown model identifier {identifier!r}; use 'hashed[:width]', "
        f"'st:<model-id>' or one of {sorted(MODEL_ALIASES)}"
    )
