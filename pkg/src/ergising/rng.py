"""Counter-based random bits for reproducible graph sampling.

Every edge indicator is a pure function of ``(seed, i, j)``, so any single
indicator can be regenerated without touching the others and graphs can be
produced in any order or in parallel with identical results.

The generator is the SplitMix64 stream: the 64-bit key is ``mix64(seed)``
and the value at counter ``c`` is ``mix64(key + (c + 1) * GOLDEN)`` (all
arithmetic mod 2**64).  The counter of the ordered pair ``(i, j)`` is
``(i << 32) | j``, independent of the graph size.  The top 53 bits form a
uniform variate ``u`` in [0, 1) and the indicator is ``u < p``.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_TRIAL_SALT = 0x5851F42D4C957F2D


def mix64(x: int) -> int:
    """SplitMix64 finalizer on a Python integer."""
    x &= MASK64
    x = ((x ^ (x >> 30)) * _M1) & MASK64
    x = ((x ^ (x >> 27)) * _M2) & MASK64
    return x ^ (x >> 31)


def _mix64_array(x: np.ndarray) -> np.ndarray:
    # uint64 multiplication wraps mod 2**64, which is what we want.
    x = (x ^ (x >> np.uint64(30))) * np.uint64(_M1)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(_M2)
    return x ^ (x >> np.uint64(31))


def derive_seed(master_seed: int, index: int) -> int:
    """Seed of trial ``index`` under ``master_seed``.

    ``mix64(mix64(master_seed ^ SALT) + (index + 1) * GOLDEN)``: a SplitMix64
    stream keyed by the master seed, read at position ``index``.
    """
    if index < 0:
        raise ValueError("trial index must be nonnegative")
    key = mix64(master_seed ^ _TRIAL_SALT)
    return mix64(key + (index + 1) * GOLDEN)


def uniform_pairs(seed: int, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Uniform [0, 1) variates attached to the ordered pairs ``(rows, cols)``."""
    key = np.uint64(mix64(seed))
    counter = (rows.astype(np.uint64) << np.uint64(32)) | cols.astype(np.uint64)
    with np.errstate(over="ignore"):
        state = key + (counter + np.uint64(1)) * np.uint64(GOLDEN)
        bits = _mix64_array(state)
    return (bits >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def bernoulli_matrix(seed: int, n: int, p: float) -> np.ndarray:
    """The ``n x n`` boolean matrix of indicators ``u(seed, i, j) < p``."""
    i, j = np.indices((n, n), dtype=np.uint64)
    return uniform_pairs(seed, i.ravel(), j.ravel()).reshape(n, n) < p
