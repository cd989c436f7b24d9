"""Deterministic named random streams.

Every stochastic routine in this package draws from a stream derived from
(master seed, label, indices).  The same triple always yields the same
generator state, so replicas can run in parallel without coordination and
whole experiments replay bit-identically.
"""
from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["stream", "label_key"]


def label_key(label: str) -> int:
    """Stable 64-bit key for a stream label (independent of PYTHONHASHSEED)."""
    digest = hashlib.blake2s(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream(seed: int, label: str, *indices: int) -> np.random.Generator:
    """Return the generator for (seed, label, indices)."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, label_key(label)]
    entropy.extend(int(i) & 0xFFFFFFFFFFFFFFFF for i in indices)
    return np.random.default_rng(np.random.SeedSequence(entropy))
