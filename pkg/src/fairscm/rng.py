"""Counter-based random numbers.

Every draw is a pure function of ``(seed, stream, row[, column])``, so any
partition of rows into chunks reproduces the sequential output bit for bit.
The mixer is the SplitMix64 finaliser applied to a keyed counter.
"""
from __future__ import annotations

import hashlib

import numpy as np
from scipy.special import ndtri

_MASK = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_COL = np.uint64(0xD1B54A32D192ED03)


def _mix(x: np.ndarray) -> np.ndarray:
    x = x ^ (x >> np.uint64(30))
    x = x * _M1
    x = x ^ (x >> np.uint64(27))
    x = x * _M2
    return x ^ (x >> np.uint64(31))


def stream_key(seed: int, stream: str) -> np.uint64:
    """64-bit key for a named stream under ``seed``."""
    digest = hashlib.blake2b(stream.encode(), digest_size=8).digest()
    tag = int.from_bytes(digest, "little")
    with np.errstate(over="ignore"):
        k = _mix(np.uint64((int(seed) & _MASK) ^ tag))
        return _mix(k + _GOLDEN)


def bits(seed: int, stream: str, rows: np.ndarray, column: int | np.ndarray = 0) -> np.ndarray:
    """Raw 64-bit outputs for the given row (and optional column) counters."""
    key = stream_key(seed, stream)
    rows = np.asarray(rows, dtype=np.uint64)
    col = np.asarray(column, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = key + (rows + np.uint64(1)) * _GOLDEN
        x = _mix(x) ^ ((col + np.uint64(1)) * _COL)
        return _mix(x + key)


def uniform(seed: int, stream: str, rows: np.ndarray, column: int | np.ndarray = 0) -> np.ndarray:
    """Uniform draws on the open interval (0, 1)."""
    b = bits(seed, stream, rows, column) >> np.uint64(11)
    return (b.astype(np.float64) + 0.5) * (1.0 / (1 << 53))


def normal(seed: int, stream: str, rows: np.ndarray, column: int | np.ndarray = 0) -> np.ndarray:
    """Standard normal draws by inverse CDF."""
    return ndtri(uniform(seed, stream, rows, column))


def categorical(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Map uniforms to category codes 0..k-1 by inverse CDF."""
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(probs) - 1)
