"""Segment-recurrent transformer encoder.

A long sequence is processed in consecutive segments. Each layer's
keys and values extend over the cached hidden states of the previous
segment (gradient-detached), while queries stay segment-local:

    layer m:  Q = H(m-1),  K,V = [cache(m-1) | H(m-1)]

The cache for the next segment holds this segment's per-layer inputs
H(0..M-1) as plain arrays, so no gradient can ever flow into them.

Block structure (per layer): pre-layer-norm, multi-head attention,
residual, pre-layer-norm, 2-layer feed-forward, residual; one final
layer norm after the stack. Head split is across channels; per-head
logits are scaled by 1/sqrt(D/heads), which collapses to 1/sqrt(D)
for a single head.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .numerics import (
    ParamStore,
    Tensor,
    concat,
    layer_norm,
    linear,
    matmul,
    mul,
    narrow,
    permute,
    relu,
    reshape,
    softmax_rows,
    swap_last,
)


@dataclass
class EncoderMemory:
    """Per-layer cached hidden states from the preceding segment."""

    layers: list[np.ndarray] = field(default_factory=list)  # each (t_prev, D)

    def check(self, depth: int, dim: int) -> None:
        if len(self.layers) != depth:
            raise ShapeError(f"memory holds {len(self.layers)} layers, encoder has {depth}")
        for i, h in enumerate(self.layers):
            if h.ndim != 2 or h.shape[1] != dim:
                raise ShapeError(f"memory layer {i} has shape {h.shape}, want (t_prev, {dim})")


def split_heads(x: Tensor, heads: int) -> Tensor:
    """(T, D) -> (heads, T, D/heads)."""
    t, d = x.shape
    if d % heads != 0:
        raise ShapeError(f"dim {d} not divisible by {heads} heads")
    return permute(reshape(x, t, heads, d // heads), (1, 0, 2))


def merge_heads(x: Tensor) -> Tensor:
    """(heads, T, Dh) -> (T, heads*Dh)."""
    h, t, dh = x.shape
    return reshape(permute(x, (1, 0, 2)), t, h * dh)


def attention(q: Tensor, k: Tensor, v: Tensor, heads: int) -> Tensor:
    """Softmax(Q K^T / sqrt(Dh)) V with channel-split heads; (T_q, D)."""
    d = q.shape[-1]
    qh, kh, vh = split_heads(q, heads), split_heads(k, heads), split_heads(v, heads)
    logits = mul(matmul(qh, swap_last(kh)), 1.0 / math.sqrt(d / heads))
    return merge_heads(matmul(softmax_rows(logits), vh))


def _attn_block(
    store: ParamStore, prefix: str, h: Tensor, mem: np.ndarray | None, heads: int
) -> Tensor:
    p = lambda name: store.tensor(f"{prefix}/{name}")
    t = h.shape[0]
    if mem is not None and mem.shape[0] > 0:
        cat = concat([Tensor(mem.copy()), h], axis=0)
    else:
        cat = h
    catn = layer_norm(cat, p("ln1/gain"), p("ln1/bias"))
    # layer norm is positionwise, so the current-segment slice of catn
    # equals ln(h); one op covers both query and key/value inputs
    hn = narrow(catn, 0, cat.shape[0] - t, t) if cat.shape[0] != t else catn
    q = linear(hn, p("attn/wq"), p("attn/bq"))
    k = linear(catn, p("attn/wk"), p("attn/bk"))
    v = linear(catn, p("attn/wv"), p("attn/bv"))
    out = linear(attention(q, k, v, heads), p("attn/wo"), p("attn/bo"))
    h = h + out
    hn2 = layer_norm(h, p("ln2/gain"), p("ln2/bias"))
    f = linear(relu(linear(hn2, p("ffn/w1"), p("ffn/b1"))), p("ffn/w2"), p("ffn/b2"))
    return h + f


def encode_segment(
    store: ParamStore,
    s: Tensor,
    mem: EncoderMemory | None,
    *,
    layers: int,
    heads: int,
    prefix: str = "encoder",
) -> tuple[list[Tensor], Tensor, EncoderMemory]:
    """One segment through the stack.

    Returns (per-layer hidden states H(1..M), normalized output, new
    memory holding this segment's detached layer inputs H(0..M-1)).
    """
    if s.ndim != 2:
        raise ShapeError(f"segment must be (t, D), got {s.shape}")
    d = s.shape[1]
    if mem is not None:
        mem.check(layers, d)
    hidden: list[Tensor] = []
    cache: list[np.ndarray] = []
    h = s
    for m in range(layers):
        cache.append(h.data.copy())
        prev = mem.layers[m] if mem is not None else None
        h = _attn_block(store, f"{prefix}/{m}", h, prev, heads)
        hidden.append(h)
    out = layer_norm(h, store.tensor(f"{prefix}/ln_out/gain"), store.tensor(f"{prefix}/ln_out/bias"))
    return hidden, out, EncoderMemory(cache)


def encode_sequence(
    store: ParamStore,
    f: Tensor,
    *,
    layers: int,
    heads: int,
    segment_len: int,
    prefix: str = "encoder",
) -> Tensor:
    """Split (T, D) into segments of `segment_len` (last may be short),
    thread the memory through, and concatenate the outputs."""
    if segment_len <= 0:
        raise ShapeError(f"segment length must be positive, got {segment_len}")
    if f.ndim != 2:
        raise ShapeError(f"sequence must be (T, D), got {f.shape}")
    t_total = f.shape[0]
    outs = []
    mem: EncoderMemory | None = None
    for start in range(0, t_total, segment_len):
        length = min(segment_len, t_total - start)
        seg = narrow(f, 0, start, length)
        _, out, mem = encode_segment(store, seg, mem, layers=layers, heads=heads, prefix=prefix)
        outs.append(out)
    return outs[0] if len(outs) == 1 else concat(outs, axis=0)
