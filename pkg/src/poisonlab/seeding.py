"""Deterministic seed derivation for every random draw in the pipeline.

All randomness anywhere in poisonlab is keyed as derive(master_seed, tag,
item...), so reruns with the same master seed are reproducible without
storing any intermediate draws.
"""

from __future__ import annotations

import hashlib
import random

import numpy as np


def derive(seed: int, *parts: object) -> int:
    """Derive a 64-bit child seed from a master seed and a tag path."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed)).encode("utf-8"))
    for part in parts:
        h.update(b"\x1f")
        h.update(str(part).encode("utf-8"))
    return int.from_bytes(h.digest(), "big")


def stdlib_rng(seed: int, *parts: object) -> random.Random:
    return random.Random(derive(seed, *parts))


def numpy_rng(seed: int, *parts: object) -> np.random.Generator:
    return np.random.default_rng(derive(seed, *parts))
