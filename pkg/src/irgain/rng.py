"""Seeded, splittable random streams.

Every stream is a Philox (counter-based) generator keyed by a root seed and a
tuple of non-negative integers, so a block of trials always sees the same
numbers no matter which worker thread draws it or in which order.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return the generator for ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def key_of(value) -> int:
    """Map a label (str, int or float) to a stable 32-bit stream key."""
    if isinstance(value, str):
        data = value.encode()
    elif isinstance(value, (int, np.integer)):
        data = b"i" + int(value).to_bytes(16, "little", signed=True)
    else:
        data = b"f" + struct.pack("<d", float(value))
    return zlib.crc32(data)


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        raise ValueError("an explicit seed or Generator is required")
    return stream(int(rng))
