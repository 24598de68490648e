"""Cross-stream channel exchange between the temporal and distance streams.

Each stream keeps its first C-k channels and receives the other
stream's last k channels; the spliced vector goes through one fully
connected C -> C remix per stream:

    out_p = W_p [p[:C-k] | d[C-k:]] + c_p
    out_d = W_d [d[:C-k] | p[C-k:]] + c_d

applied per frame and per token column. Exactly one affine application
per (frame, column) per stream; no attention, no normalization.
"""

from __future__ import annotations

from .errors import ShapeError
from .features.types import FeatureClip
from .numerics import Tensor, concat, linear, narrow, permute, reshape


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Stack two (..., C, L) tensors along the channel axis."""
    if a.ndim < 2 or b.ndim < 2 or a.ndim != b.ndim:
        raise ShapeError(f"channel concat needs matching (..., C, L) ranks: {a.shape} vs {b.shape}")
    if a.shape[-1] != b.shape[-1] or a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"non-channel dims disagree: {a.shape} vs {b.shape}")
    return concat([a, b], axis=a.ndim - 2)


def exchange_rows(keep: Tensor, inject: Tensor, k: int) -> Tensor:
    """[keep[:, :C-k] | inject[:, C-k:]] over row-vectors of width C."""
    c = keep.shape[-1]
    if keep.shape != inject.shape:
        raise ShapeError(f"stream shapes disagree: {keep.shape} vs {inject.shape}")
    if not 0 <= k <= c:
        raise ShapeError(f"exchange width k={k} outside [0, {c}]")
    if k == 0:
        return keep
    if k == c:
        return inject
    axis = keep.ndim - 1
    return concat([narrow(keep, axis, 0, c - k), narrow(inject, axis, c - k, k)], axis=axis)


def _rows(clip: FeatureClip) -> Tensor:
    t, c, l = clip.data.shape
    return reshape(permute(clip.data, (0, 2, 1)), t * l, c)


def _unrows(x: Tensor, t: int, c: int, l: int) -> FeatureClip:
    return FeatureClip(permute(reshape(x, t, l, c), (0, 2, 1)))


def interact(
    xp: FeatureClip,
    xd: FeatureClip,
    w_p: Tensor,
    b_p: Tensor,
    w_d: Tensor,
    b_d: Tensor,
    k: int,
) -> tuple[FeatureClip, FeatureClip]:
    """Fused (temporal, distance) streams; shapes are preserved."""
    if xp.data.shape != xd.data.shape:
        raise ShapeError(f"stream shapes disagree: {xp.data.shape} vs {xd.data.shape}")
    t, c, l = xp.data.shape
    rows_p, rows_d = _rows(xp), _rows(xd)
    out_p = linear(exchange_rows(rows_p, rows_d, k), w_p, b_p)
    out_d = linear(exchange_rows(rows_d, rows_p, k), w_d, b_d)
    return _unrows(out_p, t, c, l), _unrows(out_d, t, c, l)


def default_exchange_width(channels: int) -> int:
    return channels // 4
