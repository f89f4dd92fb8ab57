"""Deterministic seed derivation.

Per-iteration and per-purpose seeds derive from a master seed through
SplitMix64, so campaigns replay bit-for-bit and reimplementations can match
the stream without sharing generator state.
"""
from __future__ import annotations

_MASK = (1 << 64) - 1


def splitmix64(seed: int) -> int:
    z = (seed + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def derive_seed(master: int, *path: int) -> int:
    """Child seed for a position in the derivation tree, e.g.
    derive_seed(master, iteration, purpose)."""
    seed = master & _MASK
    for component in path:
        seed = splitmix64(seed ^ (component & _MASK))
    return seed
