"""Deterministic seed derivation.

Experiment cells, forest members and per-class binary models each need
their own RNG stream, derived from one base seed plus a handful of
coordinates. Python's builtin hash() is salted per process, so we mix
with a fixed 64-bit FNV-1a / splitmix64 combination instead.
"""

import numpy as np

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def mix(*parts) -> int:
    """Mix ints/strings into a stable 64-bit seed."""
    h = _FNV_OFFSET
    for part in parts:
        data = part.encode() if isinstance(part, str) else (int(part) & _MASK64).to_bytes(8, "little")
        for byte in data:
            h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return _splitmix64(h)


def rng_for(*parts) -> np.random.Generator:
    """A fresh Generator seeded from the mixed coordinates."""
    return np.random.Generator(np.random.PCG64(mix(*parts)))
