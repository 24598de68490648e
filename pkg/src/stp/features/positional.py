"""Sinusoidal position encoding over absolute frame indices."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError


def positional_embedding(length: int, channels: int, start: int = 0) -> np.ndarray:
    """(length, channels) table: pe[t, 2i] = sin(t / 10000^(2i/C)),
    pe[t, 2i+1] = cos(t / 10000^(2i/C)); t counts from `start` so that
    segmented clips keep absolute positions."""
    if channels % 2 != 0:
        raise ShapeError(f"positional embedding needs an even channel count, got {channels}")
    if length < 0:
        raise ShapeError(f"negative length {length}")
    t = np.arange(start, start + length, dtype=np.float64)[:, None]
    i = np.arange(channels // 2, dtype=np.float64)[None, :]
    angle = t / np.power(10000.0, 2.0 * i / channels)
    pe = np.empty((length, channels))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe
