"""Counter-based random streams for reproducible data generation.

Every random quantity drawn by the data generator is a pure function of
(seed, row, channel), so regenerating any prefix of a dataset reproduces it
bit-identically on every platform, independent of how many rows are drawn.
The mixing function is splitmix64; uniforms are built from the top 53 bits.
"""

from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_U53 = 2.0 ** -53

# Channel offsets keep the per-variable streams disjoint.
CH_BACKGROUND = 100
CH_SYMPTOM = 200
CH_TREATMENT = 300
CH_OUTCOME = 400


def _mix(x: np.ndarray) -> np.ndarray:
    z = x + _GAMMA
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


def _as_u64(value: int) -> np.uint64:
    return np.uint64(int(value) & 0xFFFFFFFFFFFFFFFF)


def keyed_uniforms(seed: int, channel: int, rows: np.ndarray | int) -> np.ndarray:
    """Uniforms in [0, 1) keyed on (seed, channel, row).

    ``rows`` is either a row-index array or a row count n (meaning rows
    0..n-1). Row i's value never depends on which other rows are drawn.
    """
    if np.isscalar(rows):
        rows = np.arange(int(rows), dtype=np.uint64)
    else:
        rows = np.asarray(rows, dtype=np.uint64)
    with np.errstate(over="ignore"):
        key = _mix(_mix(_as_u64(seed)) ^ _as_u64(channel))
        bits = _mix(key ^ rows)
    return (bits >> _S11).astype(np.float64) * _U53


def poisson_inverse(u: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Poisson quantile by CDF inversion, deterministic in (u, lam).

    Suitable for the moderate means used here (lam up to a few tens); u is
    clipped away from 1 so the summation always terminates.
    """
    u = np.clip(np.asarray(u, dtype=np.float64), 1e-16, 1.0 - 1e-12)
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), u.shape).copy()
    if np.any(lam <= 0) or not np.all(np.isfinite(lam)):
        raise ValueError("poisson_inverse requires finite positive means")
    k = np.zeros(u.shape, dtype=np.int64)
    pmf = np.exp(-lam)
    cdf = pmf.copy()
    active = u > cdf
    # P(K > lam + 40*sqrt(lam) + 50) is far below the u clip, so this bounds
    # the loop for any mean we ever generate.
    limit = int(np.ceil(lam.max() + 40.0 * np.sqrt(lam.max()) + 50.0))
    for _ in range(limit):
        if not active.any():
            break
        k[active] += 1
        pmf[active] *= lam[active] / k[active]
        cdf[active] += pmf[active]
        active &= u > cdf
    return k


def derive_seed(*parts: int) -> int:
    """Stable 64-bit seed derived from integer parts (order-sensitive)."""
    state = _as_u64(0xD1B54A32D192ED03)
    with np.errstate(over="ignore"):
        for part in parts:
            state = _mix(state ^ _as_u64(part))
    return int(state)
