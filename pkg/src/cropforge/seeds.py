"""Seed derivation for deterministic, order-independent parallel generation.

Every randomized stage owns a generator seeded from the run's master seed and
a stable string context (usually the sample's relative source path), so the
output of a sample never depends on scan order or worker scheduling.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(master_seed: int, *context: object) -> int:
    """Mix a master seed with string/int context into a 64-bit child seed."""
    h = hashlib.blake2b(digest_size=8)
    h.update(int(master_seed & MASK64).to_bytes(8, "little"))
    for part in context:
        token = part if isinstance(part, str) else repr(part)
        h.update(b"\x1f")  # separator so ("ab","c") != ("a","bc")
        h.update(token.encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator for a derived seed."""
    return np.random.Generator(np.random.PCG64(seed & MASK64))
