"""Counter-based per-row random streams.

Every random draw attached to a data row is a pure function of
``(seed, stream, repetition, row_id)``. Two schemes evaluated on the same
repetition therefore see the same uniforms row by row, and results do not
depend on how rows or repetitions are scheduled.
"""

import numpy as np
from scipy.special import ndtri

# stream tags
ASSIGNMENT = 1
ORACLE = 2
HOLDOUT = 3
OUTCOME = 4
FLIP = 5

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z):
    with np.errstate(over="ignore"):
        z = z ^ (z >> np.uint64(30))
        z = z * _M1
        z = z ^ (z >> np.uint64(27))
        z = z * _M2
        return z ^ (z >> np.uint64(31))


def _key(*parts):
    h = 0
    for p in parts:
        h = (h * 0x100000001B3 + (int(p) & _MASK) + 0x9E3779B97F4A7C15) & _MASK
        h = int(_mix(np.uint64(h)))
    return np.uint64(h)


def row_uniforms(seed, stream, repetition, rows):
    """Uniform(0, 1) draws, one per row id, strictly inside the open interval."""
    rows = np.asarray(rows, dtype=np.uint64)
    key = _key(seed, stream, repetition)
    with np.errstate(over="ignore"):
        h = _mix(_mix(key ^ (rows * _GOLDEN)) + _GOLDEN)
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


def row_normals(seed, stream, repetition, rows):
    """Standard normal draws, one per row id."""
    return ndtri(row_uniforms(seed, stream, repetition, rows))


def generator(*parts):
    """A numpy Generator keyed on an arbitrary tuple of non-negative integers."""
    words = []
    for p in parts:
        p = int(p) & _MASK
        words += [p & 0xFFFFFFFF, p >> 32]
    return np.random.default_rng(words)
