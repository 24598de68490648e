"""Deterministic RNG substreams.

Every random draw in the package flows from one user-supplied seed.
Independent components (data generation, parameter init, shuffling)
get their own named substream so that adding draws to one cannot
perturb another.
"""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Generator for the (seed, name, *extra) substream."""
    key = [int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode("utf-8"))]
    key.extend(int(e) & 0xFFFFFFFF for e in extra)
    return np.random.default_rng(key)
