"""Keyed deterministic random streams.

Every stochastic stage derives its randomness from a counter-based Philox
generator keyed by (global seed, stage tag, per-item indices). Streams for
different keys are independent, so per-author work gives identical results
no matter in which order (or on how many workers) it runs.
"""

import hashlib

import numpy as np


def philox_key(*parts) -> np.ndarray:
    """Hash arbitrary key parts into the 128-bit Philox key."""
    h = hashlib.blake2b(digest_size=16)
    for part in parts:
        h.update(str(part).encode("utf-8"))
        h.update(b"\x1f")
    return np.frombuffer(h.digest(), dtype="<u8")


def keyed_rng(*parts) -> np.random.Generator:
    """Generator whose stream depends only on the key parts."""
    return np.random.Generator(np.random.Philox(key=philox_key(*parts)))


def stable_hash64(*parts) -> int:
    """Process-independent 64-bit hash (unlike builtin hash, never salted)."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(str(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")
