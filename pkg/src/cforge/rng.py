"""Seeded, splittable random streams.

Every stochastic routine receives a ``numpy.random.Generator`` derived from a
root seed plus string/int keys, so independent consumers (replications,
scenarios, training phases) never share a stream and runs are reproducible.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    return zlib.crc32(str(key).encode("utf-8"))


def seed_sequence(seed: int, *keys) -> np.random.SeedSequence:
    """SeedSequence for ``seed`` specialised by ``keys`` (stable across runs)."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_key_to_int(k) for k in keys]
    return np.random.SeedSequence(entropy)


def make_rng(seed: int, *keys) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *keys)))


def derive_seed(seed: int, *keys) -> int:
    """Integer child seed, for APIs that take a seed rather than a generator."""
    return int(seed_sequence(seed, *keys).generate_state(1, dtype=np.uint32)[0])
