"""Counter-based splittable random streams.

Every random quantity in the package is a pure function of an integer key
and a counter, built from the splitmix64 finalizer.  Child keys are derived
by absorbing path elements (trial index, role tag), so any trial of any
experiment can be regenerated in isolation and trial ranges can be merged
or scheduled in any order without changing results.

The same arithmetic is implemented three times (pure python here, and
vectorized numpy / numba loops in :mod:`stability_lab.kernels`); all three
agree bit for bit, which the test suite asserts.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

# role tags for child-key derivation (document order, never renumber)
ROLE_SAMPLE = 0      # per-trial sample draw
ROLE_LEARNER = 1     # per-trial learner randomness
ROLE_SAMPLE2 = 2     # second sample in shared-randomness trials
ROLE_BATCH = 3       # per-batch inner seeds inside the booster
ROLE_GEVAL = 4       # per-evaluation seeds of the adversary search
ROLE_PICK = 5        # hypothesis pick in random distribution generation
ROLE_WEIGHTS = 6     # mass vector draw in random distribution generation

_INV53 = 1.0 / 9007199254740992.0  # 2**-53


def mix64(z: int) -> int:
    """splitmix64 finalizer on a 64-bit integer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def derive(key: int, *path: int) -> int:
    """Derive a child key by absorbing ``path`` elements one at a time."""
    h = key & MASK64
    for p in path:
        h = mix64((h + GOLDEN + (p & MASK64)) & MASK64)
    return h


def raw(key: int, counter: int) -> int:
    """The ``counter``-th 64-bit output of the stream with the given key."""
    return mix64((key + ((counter + 1) * GOLDEN)) & MASK64)


def uniform(key: int, counter: int) -> float:
    """The ``counter``-th uniform in [0, 1) (53-bit mantissa)."""
    return (raw(key, counter) >> 11) * _INV53


def uniforms(key: int, count: int, start: int = 0) -> np.ndarray:
    """``count`` consecutive uniforms starting at counter ``start``."""
    return np.array([uniform(key, start + c) for c in range(count)],
                    dtype=np.float64)
