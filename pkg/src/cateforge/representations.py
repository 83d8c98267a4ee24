"""Model-input matrices for the four confounder-representation channels.

The channels mirror how much of the confounding signal reaches the models:

* ``perfect``    - background variables plus the true symptom indicators.
* ``none``       - background variables only.
* ``entangled``  - background plus a simulated embedding that carries the
  symptoms and a distractor block spread across many correlated dimensions
  through a random orthonormal mixing, plus isotropic noise.
* ``external``   - background plus an embedding matrix loaded from a file
  produced by some outside encoder.

All columns are z-scored with statistics fitted on training rows only.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .datagen import SYMPTOMS, Dataset
from .errors import ConfigurationError, EmbeddingFormatError

CHANNEL_PERFECT = "perfect"
CHANNEL_NONE = "none"
CHANNEL_ENTANGLED = "entangled"
CHANNEL_EXTERNAL = "external"
CHANNELS = (CHANNEL_PERFECT, CHANNEL_NONE, CHANNEL_ENTANGLED, CHANNEL_EXTERNAL)

_CEMB_MAGIC = b"CEMB"
_CEMB_VERSION = 1

_TAG_MIXING = 0x319A
_TAG_DISTRACTOR = 0xD157
_TAG_NOISE = 0x901E


@dataclass(frozen=True)
class RepresentationConfig:
    channel: str
    embed_dim: int = 64
    noise_sigma: float = 0.1
    distractor_count: int = 8
    mixing_seed: int = 7
    embedding_path: str | None = None

    def validated(self) -> "RepresentationConfig":
        if self.channel not in CHANNELS:
            raise ConfigurationError("channel", f"must be one of {CHANNELS}")
        if self.noise_sigma < 0.0:
            raise ConfigurationError("noise_sigma", "must be >= 0")
        if self.distractor_count < 0:
            raise ConfigurationError("distractor_count", "must be >= 0")
        if self.channel == CHANNEL_ENTANGLED and self.embed_dim < 5 + self.distractor_count:
            raise ConfigurationError(
                "embed_dim",
                f"must be >= 5 + distractor_count = {5 + self.distractor_count} "
                "so the mixing is not rank-deficient on the signal block",
            )
        if self.channel == CHANNEL_EXTERNAL and not self.embedding_path:
            raise ConfigurationError("embedding_path", "required for the external channel")
        return self


@dataclass
class RepresentedDataset:
    phi: np.ndarray  # (n, m) standardized model input
    feature_names: tuple[str, ...]
    column_means: np.ndarray
    column_scales: np.ndarray

    @property
    def n_features(self) -> int:
        return self.phi.shape[1]


def entangle(
    symptoms: np.ndarray, background: np.ndarray, cfg: RepresentationConfig
) -> np.ndarray:
    """Simulated text embedding of the symptoms, (n, embed_dim).

    The signal block [symptoms | distractors] is pushed through a random
    matrix with orthonormal columns drawn from mixing_seed, then per-row
    Gaussian noise scaled by noise_sigma is added. With zero noise the
    symptoms are exactly recoverable by the transposed mixing.
    """
    if cfg.channel != CHANNEL_ENTANGLED:
        raise ConfigurationError("channel", "entangle requires the entangled channel")
    cfg.validated()
    symptoms = np.asarray(symptoms, dtype=np.float64)
    background = np.asarray(background, dtype=np.float64)
    n = symptoms.shape[0]
    k = cfg.distractor_count
    d = cfg.embed_dim
    mix_seed = cfg.mixing_seed & 0xFFFFFFFFFFFFFFFF

    if k > 0:
        rng_z = np.random.default_rng(np.random.SeedSequence([mix_seed, _TAG_DISTRACTOR]))
        # Distractor coordinates deliberately dwarf the symptom block: real
        # note embeddings are dominated by non-confounder content, and the
        # large signal variance keeps the additive noise a small fraction of
        # every standardized column.
        distractor_map = 2.0 * rng_z.normal(size=(background.shape[1], k))
        z = background @ distractor_map
        signal = np.hstack([symptoms, z])
    else:
        signal = symptoms

    q = mixing_matrix(cfg)
    # Noise for row i only consumes draws i*d..(i+1)*d-1 of one stream, so it
    # is a pure function of (mixing_seed, row) regardless of n.
    rng_n = np.random.default_rng(np.random.SeedSequence([mix_seed, _TAG_NOISE]))
    noise = rng_n.standard_normal(size=(n, d))
    return signal @ q.T + cfg.noise_sigma * noise


def mixing_matrix(cfg: RepresentationConfig) -> np.ndarray:
    """The (d, 5+k) orthonormal-column mixing used by entangle."""
    rng_q = np.random.default_rng(
        np.random.SeedSequence([cfg.mixing_seed & 0xFFFFFFFFFFFFFFFF, _TAG_MIXING])
    )
    gauss = rng_q.normal(size=(cfg.embed_dim, 5 + cfg.distractor_count))
    q, r = np.linalg.qr(gauss)
    return q * np.where(np.diag(r) >= 0.0, 1.0, -1.0)


def _standardize(
    raw: np.ndarray, train_mask: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    means = raw[train_mask].mean(axis=0)
    scales = raw[train_mask].std(axis=0)
    scales = np.where(scales > 0.0, scales, 1.0)  # constant columns keep scale 1
    return (raw - means) / scales, means, scales


def build_representation(
    d: Dataset, cfg: RepresentationConfig, train_mask: np.ndarray
) -> RepresentedDataset:
    """Assemble and standardize the model input for one channel.

    ``train_mask`` is a boolean mask (or index array) selecting the rows the
    standardization statistics may be fitted on; the transform applies to all
    rows.
    """
    cfg.validated()
    mask = np.zeros(d.n, dtype=bool)
    mask[np.asarray(train_mask)] = True
    if not mask.any():
        raise ValueError("train_mask selects no rows")

    background_names = d.background_names
    if cfg.channel == CHANNEL_NONE:
        raw = d.x_background
        names = background_names
    elif cfg.channel == CHANNEL_PERFECT:
        raw = np.hstack([d.x_background, d.x_symptoms])
        names = background_names + SYMPTOMS
    elif cfg.channel == CHANNEL_ENTANGLED:
        emb = entangle(d.x_symptoms, d.x_background, cfg)
        raw = np.hstack([d.x_background, emb])
        names = background_names + tuple(f"emb_{i}" for i in range(cfg.embed_dim))
    else:
        emb = load_embeddings(cfg.embedding_path)
        if emb.shape[0] != d.n:
            raise ValueError(
                f"embedding file has {emb.shape[0]} rows but the dataset has {d.n}"
            )
        raw = np.hstack([d.x_background, emb])
        names = background_names + tuple(f"emb_{i}" for i in range(emb.shape[1]))

    phi, means, scales = _standardize(np.asarray(raw, dtype=np.float64), mask)
    if not np.all(np.isfinite(phi)):
        raise ValueError("representation contains non-finite entries")
    return RepresentedDataset(phi, tuple(names), means, scales)


# ---------------------------------------------------------------------------
# CEMB embedding files


def save_embeddings(matrix: np.ndarray, path) -> None:
    """Write a CEMB v1 file: magic, u32 version/n/d, little-endian f32 rows."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ValueError("embedding matrix must be 2-dimensional")
    n, dim = matrix.shape
    with open(path, "wb") as fh:
        fh.write(_CEMB_MAGIC)
        fh.write(struct.pack("<III", _CEMB_VERSION, n, dim))
        fh.write(matrix.astype("<f4").tobytes(order="C"))


def _load_cemb(payload: bytes, path) -> np.ndarray:
    if len(payload) < 16:
        raise EmbeddingFormatError(f"{path}: truncated CEMB header")
    version, n, dim = struct.unpack("<III", payload[4:16])
    if version != _CEMB_VERSION:
        raise EmbeddingFormatError(f"{path}: unsupported CEMB version {version}")
    expected = 16 + 4 * n * dim
    if len(payload) < expected:
        have = (len(payload) - 16) // 4
        raise EmbeddingFormatError(
            f"{path}: truncated payload, expected {n * dim} f32 values, found {have}"
        )
    values = np.frombuffer(payload[16:expected], dtype="<f4")
    return values.reshape(n, dim)


def _load_embedding_csv(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise EmbeddingFormatError(f"{path}: first line must be 'n d'")
        try:
            n, dim = int(header[0]), int(header[1])
        except ValueError as exc:
            raise EmbeddingFormatError(f"{path}: first line must be 'n d'") from exc
        rows = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != dim:
                raise EmbeddingFormatError(
                    f"{path}: row {len(rows)} has {len(parts)} values, expected {dim}"
                )
            rows.append([float(v) for v in parts])
    if len(rows) != n:
        raise EmbeddingFormatError(f"{path}: expected {n} rows, found {len(rows)}")
    return np.asarray(rows, dtype=np.float32).astype(np.float64)


def load_embeddings(path) -> np.ndarray:
    """Load a CEMB binary file (or its 'n d' CSV variant) as float64 (n, d).

    Non-finite entries are rejected with their (row, col) location.
    """
    with open(path, "rb") as fh:
        head = fh.read(4)
        rest = fh.read()
    if head == _CEMB_MAGIC:
        matrix = _load_cemb(head + rest, path).astype(np.float64)
    else:
        matrix = _load_embedding_csv(path)
    bad = np.argwhere(~np.isfinite(matrix))
    if len(bad):
        row, col = bad[0]
        raise EmbeddingFormatError(
            f"{path}: non-finite value at (row {int(row)}, col {int(col)})"
        )
    return matrix
