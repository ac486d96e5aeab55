"""Seed derivation and counter-based random streams.

Every random decision in the package draws from a Philox4x32-10 stream
(numpy's ``Philox`` bit generator). A stream is addressed by the global seed
plus a tuple of labels, e.g. ``stream(seed, "noise", "img_0001.png")``; the
128-bit Philox key is the BLAKE2b digest of those parts. Streams therefore
never depend on call order or on how work is scheduled across threads.
"""

from __future__ import annotations

import hashlib

import numpy as np

ALGORITHM = "Philox4x32-10"

_MASK64 = (1 << 64) - 1


def derive_key(seed: int, *parts: object) -> int:
    """128-bit key for ``(seed, *parts)``."""
    h = hashlib.blake2b(digest_size=16)
    h.update(str(int(seed) & _MASK64).encode())
    for p in parts:
        h.update(b"\x1f")
        h.update(str(p).encode())
    return int.from_bytes(h.digest(), "little")


def derive_seed(seed: int, *parts: object) -> int:
    """64-bit child seed for ``(seed, *parts)``."""
    return derive_key(seed, *parts) & _MASK64


def stream(seed: int, *parts: object) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=derive_key(seed, *parts)))
