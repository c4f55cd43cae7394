"""Deterministic stream splitting.

A child stream is seeded with ``hash64(root_seed, tag, index)`` where hash64 is
the first 8 bytes (little endian) of BLAKE2b over the UTF-8 string
``"{root_seed}/{tag}/{index}"``.  The generator is numpy's PCG64 seeded with
that integer, so the stream tree is reproducible from any language that has
BLAKE2b and PCG64.
"""
from __future__ import annotations

import hashlib

import numpy as np


def hash64(root_seed: int, tag: str, index: int = 0) -> int:
    key = f"{int(root_seed)}/{tag}/{int(index)}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def child_stream(root_seed: int, tag: str, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(hash64(root_seed, tag, index)))


def as_generator(stream) -> np.random.Generator:
    """Accept a Generator, an int seed or None."""
    if isinstance(stream, np.random.Generator):
        return stream
    return np.random.default_rng(stream)
