"""Seeded random sources.

Every random draw in the package goes through a PCG64 bit generator
(``numpy.random.PCG64``), which produces the same stream on every platform
for a given 64-bit seed. Independent streams for different purposes are
obtained by hashing ``(seed, label, ...)`` with BLAKE2b rather than by
advancing one shared generator, so adding a consumer never shifts the
draws seen by another.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(seed: int, *labels: object) -> int:
    """Return a 64-bit sub-seed for ``seed`` and a purpose label path."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed) & MASK64).encode())
    for label in labels:
        h.update(b"\x1f")
        h.update(repr(label).encode())
    return int.from_bytes(h.digest(), "little")


def make_rng(seed: int, *labels: object) -> np.random.Generator:
    if labels:
        seed = derive_seed(seed, *labels)
    return np.random.Generator(np.random.PCG64(int(seed) & MASK64))
