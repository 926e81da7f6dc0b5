"""Purpose-keyed seed derivation.

One global seed is split into independent streams, one per pipeline stage
("split", "init", "batch/3", ...), so that changing how many random draws one
stage makes never shifts another stage's randomness.

The mixing function is fixed and documented: the purpose tag is folded into
the seed with FNV-1a (64-bit), then finalized with the SplitMix64 mixer.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def mix_seed(seed: int, purpose: str) -> int:
    """Derive a 64-bit stream seed from (global seed, purpose tag)."""
    h = (_FNV_OFFSET ^ (seed & _MASK64)) & _MASK64
    for byte in purpose.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    # SplitMix64 finalizer
    z = (h + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def rng_for(seed: int, purpose: str) -> np.random.Generator:
    """Seeded PRNG for one pipeline stage."""
    return np.random.default_rng(mix_seed(seed, purpose))
