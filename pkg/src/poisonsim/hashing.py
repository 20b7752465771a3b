"""Deterministic non-cryptographic hashing and RNG derivation.

Every random stream in poisonsim is derived from explicit integer seeds via
`rng_for`, so runs are bit-reproducible regardless of worker count or
platform.  The hash is 64-bit FNV-1a; the optional seed is XORed into the
offset basis, with seed 0 giving the textbook constant.
"""

from __future__ import annotations

import numpy as np

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def stable_hash64(data: bytes | str, seed: int = 0) -> int:
    """64-bit FNV-1a of `data`; stable across runs and platforms."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = _FNV_OFFSET ^ (seed & _MASK64)
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def rng_for(*parts: int | str) -> np.random.Generator:
    """Generator seeded from a tuple of ints/strings, order-sensitive."""
    entropy = [stable_hash64(p) if isinstance(p, str) else int(p) & _MASK64
               for p in parts]
    return np.random.default_rng(np.random.SeedSequence(entropy))
