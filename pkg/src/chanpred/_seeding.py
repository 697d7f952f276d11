"""Seed derivation.

Every random stream is derived from a master integer seed and a tuple of
integer keys through :class:`numpy.random.SeedSequence`, so that streams
for different purposes never overlap and do not depend on call order::

    stream(seed, PATHS)           -> path geometry and gains
    stream(seed, NOISE)           -> estimation noise
    stream(seed, TRAIN, tag, i)   -> shuffling / init of network i
"""
from __future__ import annotations

import zlib

import numpy as np

PATHS = 0
NOISE = 1
TRAIN = 2
CELL = 3


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 63-bit child seed of ``seed`` for ``keys``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(2, dtype=np.uint32).view(np.uint64)[0] >> np.uint64(1))


def stream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *keys))


def name_key(name: str) -> int:
    # str hash() is salted per process; crc32 is stable
    return zlib.crc32(name.encode("utf-8"))
