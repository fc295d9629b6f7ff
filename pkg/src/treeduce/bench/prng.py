"""Counter-based 64-bit PRNG for reproducible dataset generation.

Every value is a pure function of (seed, file index, counter), so files
can be generated in any chunking and always come out identical:

    file_key(seed, i) = mix64(seed + (i + 1) * GOLDEN)      mod 2^64
    draw(key, j)      = mix64(key + (j + 1) * GOLDEN)       mod 2^64
    unit(r)           = (r >> 11) * 2^-53                   in [0, 1)

mix64 is the SplitMix64 finalizer. The +1 offsets keep file 0 / counter 0
from collapsing onto the raw seed.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

_MULT1 = 0xBF58476D1CE4E5B9
_MULT2 = 0x94D049BB133111EB


def mix64(x: int) -> int:
    x &= MASK64
    x ^= x >> 30
    x = (x * _MULT1) & MASK64
    x ^= x >> 27
    x = (x * _MULT2) & MASK64
    x ^= x >> 31
    return x


def file_key(seed: int, file_index: int) -> int:
    return mix64((seed + (file_index + 1) * GOLDEN) & MASK64)


def draw(key: int, counter: int) -> int:
    return mix64((key + (counter + 1) * GOLDEN) & MASK64)


def unit(r: int) -> float:
    return (r >> 11) * 2.0**-53


def mix64_array(x: np.ndarray) -> np.ndarray:
    """Vectorized mix64 over a uint64 array (wrapping arithmetic)."""
    x = x.astype(np.uint64, copy=True)
    x ^= x >> np.uint64(30)
    x *= np.uint64(_MULT1)
    x ^= x >> np.uint64(27)
    x *= np.uint64(_MULT2)
    x ^= x >> np.uint64(31)
    return x


def draw_array(key: int, counters: np.ndarray) -> np.ndarray:
    c = counters.astype(np.uint64, copy=False)
    return mix64_array(np.uint64(key) + (c + np.uint64(1)) * np.uint64(GOLDEN))


def unit_array(r: np.ndarray) -> np.ndarray:
    return (r >> np.uint64(11)).astype(np.float64) * 2.0**-53
