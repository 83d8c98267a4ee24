"""CEMB v1 writer: the wire format consumed by the estimation library.

Layout: magic bytes ``CEMB``, then little-endian u32 version (=1), u32 row
count n, u32 width d, then n*d little-endian IEEE-754 f32 values row-major.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"CEMB"
VERSION = 1


def write_cemb(matrix: np.ndarray, path) -> None:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ValueError("embedding matrix must be 2-dimensional")
    if not np.all(np.isfinite(matrix)):
        raise ValueError("embedding matrix contains non-finite values")
    n, d = matrix.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, n, d))
        fh.write(matrix.astype("<f4").tobytes(order="C"))
