"""Counter-based Gaussian streams (Philox-4x32-10).

Every draw is addressed by the triple (seed, step, particle) instead of by a
position in a sequential stream.  Regenerating a single increment, a subset
of particles, or the whole block always yields bit-identical values, which
is what lets coupling experiments share one Brownian path between runs with
different step counts or particle counts.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_WEYL0 = 0x9E3779B9
_WEYL1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_ROUNDS = 10
_INV_2_53 = 1.0 / float(1 << 53)


def _round_keys(seed: int) -> list[tuple[np.uint64, np.uint64]]:
    k0 = seed & 0xFFFFFFFF
    k1 = (seed >> 32) & 0xFFFFFFFF
    keys = []
    for r in range(_ROUNDS):
        keys.append(
            (
                np.uint64((k0 + r * _WEYL0) & 0xFFFFFFFF),
                np.uint64((k1 + r * _WEYL1) & 0xFFFFFFFF),
            )
        )
    return keys


def philox_uniform(seed: int, step: int, particles: np.ndarray) -> np.ndarray:
    """Uniform(0, 1) draws keyed by (seed, step, particle index).

    The particle index fills the low counter lanes, the step index the high
    ones, and the seed is the cipher key, so distinct keys map to distinct
    cipher blocks.  53 output bits per draw, never exactly 0 or 1.
    """
    idx = np.asarray(particles, dtype=np.uint64)
    x0 = idx & _MASK32
    x1 = (idx >> np.uint64(32)) & _MASK32
    x2 = np.full(idx.shape, step & 0xFFFFFFFF, dtype=np.uint64)
    x3 = np.full(idx.shape, (step >> 32) & 0xFFFFFFFF, dtype=np.uint64)
    for key0, key1 in _round_keys(seed):
        p0 = _M0 * x0
        p1 = _M1 * x2
        hi0 = p0 >> np.uint64(32)
        lo0 = p0 & _MASK32
        hi1 = p1 >> np.uint64(32)
        lo1 = p1 & _MASK32
        x0, x1, x2, x3 = hi1 ^ x1 ^ key0, lo1, hi0 ^ x3 ^ key1, lo0
    v = (x0 >> np.uint64(5)) * np.uint64(1 << 26) + (x1 >> np.uint64(6))
    return (v.astype(np.float64) + 0.5) * _INV_2_53


def keyed_normals(seed: int, step: int, particles: np.ndarray) -> np.ndarray:
    """Standard normal draws keyed by (seed, step, particle index)."""
    return ndtri(philox_uniform(seed, step, particles))
