"""Label-derived random number streams.

Every random decision in the pipeline flows from a single root seed.
Substreams are derived by hashing the root seed together with a purpose
label (plus optional indices), so adding a new consumer or reordering
calls never perturbs the streams of existing consumers, and independent
workers can reproduce their stream without shared state.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root_seed: int, *labels) -> int:
    """Derive a stable 64-bit seed from a root seed and purpose labels."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(root_seed)).encode("utf-8"))
    for label in labels:
        h.update(b"\x1f")
        h.update(str(label).encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


def derive_rng(root_seed: int, *labels) -> np.random.Generator:
    """Seeded generator for one purpose, independent of all other purposes."""
    return np.random.default_rng(derive_seed(root_seed, *labels))
