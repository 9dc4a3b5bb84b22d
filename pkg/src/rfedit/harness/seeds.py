"""Deterministic seed expansion.

A master seed expands to per-sample seeds through a splitmix64 finalizer:

    seed_i = splitmix64((master + (i + 1) * 0x9E3779B97F4A7C15) mod 2^64)

so samples are independent of each other and of evaluation order.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """The splitmix64 finalizer; maps 64-bit ints to well-mixed 64-bit ints."""
    z = (x + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def per_sample_seed(master: int, index: int) -> int:
    if index < 0:
        raise ValueError("sample index must be non-negative")
    return splitmix64((int(master) + (index + 1) * _GOLDEN) & _MASK64)


def rng_for_sample(master: int, index: int) -> np.random.Generator:
    return np.random.default_rng(per_sample_seed(master, index))
