"""Masked query decoder and prediction heads.

N_q learnable queries cross-attend to the encoded frames under a
causal staircase mask: query i sees only the first ceil(i*n/N_q)
frames, so early queries specialize to early video content and the
last query sees everything. Masked frames contribute nothing to the
numerator or denominator of the attention softmax — their
probabilities are exactly zero, not merely small.

Each decoder block is pre-layer-norm residual: self-attention over
queries, masked cross-attention to frames, then a 2-layer feed-forward.
The regression head emits (center, length) through a sigmoid, which
guarantees ordered, in-range segment endpoints without extra penalties.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, ShapeError
from .numerics import (
    ParamStore,
    Tensor,
    clamp,
    concat,
    layer_norm,
    linear,
    masked_softmax,
    matmul,
    mul,
    narrow,
    relu,
    sigmoid,
    swap_last,
)
from .encoder import attention

MASK_RULES = ("staircase", "paper_literal")


@dataclass(frozen=True)
class CausalMask:
    """Row-prefix attention mask: query i may attend frames [0, prefix[i])."""

    prefix_lengths: np.ndarray  # (N_q,) int64
    n_frames: int

    def __post_init__(self):
        object.__setattr__(
            self, "prefix_lengths", np.asarray(self.prefix_lengths, dtype=np.int64)
        )

    @property
    def n_queries(self) -> int:
        return int(self.prefix_lengths.shape[0])

    def validate(self, full_last_row: bool = True) -> None:
        p = self.prefix_lengths
        if p.ndim != 1 or p.shape[0] < 1:
            raise ShapeError(f"mask needs at least one query row, got shape {p.shape}")
        if (p < 1).any():
            raise ShapeError("mask has an empty row (every query must see >= 1 frame)")
        if (p > self.n_frames).any():
            raise ShapeError("mask prefix exceeds the frame count")
        if (np.diff(p) < 0).any():
            raise ShapeError("mask prefixes must be non-decreasing")
        if full_last_row and p[-1] != self.n_frames:
            raise ShapeError("last query must see every frame")

    def as_dense(self) -> np.ndarray:
        """(N_q, n) 0/1 matrix."""
        cols = np.arange(self.n_frames)[None, :]
        return (cols < self.prefix_lengths[:, None]).astype(np.float64)


def build_mask(n_frames: int, n_queries: int, rule: str = "staircase") -> CausalMask:
    """Staircase mask of widening prefixes.

    The default rule gives query i (1-indexed) the first ceil(i*n/N_q)
    frames. `paper_literal` keeps the printed inequality i >= j*floor(n/t)
    read as prefix floor(i / floor(n/N_q)); its empty early rows are
    clamped to one frame and its last row is not full — it exists for
    comparison only and fails strict validation.
    """
    if n_frames < 1 or n_queries < 1:
        raise InputError(f"mask sizes must be positive, got n={n_frames}, N_q={n_queries}")
    i = np.arange(1, n_queries + 1, dtype=np.int64)
    if rule == "staircase":
        prefix = -(-i * n_frames // n_queries)  # ceil(i*n/N_q)
        mask = CausalMask(prefix, n_frames)
        mask.validate(full_last_row=True)
    elif rule == "paper_literal":
        step = max(1, n_frames // n_queries)
        prefix = np.minimum(n_frames, np.maximum(1, i // step))
        mask = CausalMask(prefix, n_frames)
        mask.validate(full_last_row=False)
    else:
        raise InputError(f"unknown mask rule {rule!r}; choose from {MASK_RULES}")
    return mask


def causal_cross_attention(
    store: ParamStore,
    prefix: str,
    queries: Tensor,
    frames: Tensor,
    mask: CausalMask,
    scale_logits: bool = True,
) -> Tensor:
    """Masked single-head cross-attention: per query i,
    y_i = sum_j M_ij exp(l_ij) V(x_j) / sum_j M_ij exp(l_ij)
    with l_ij = Q_i . K(x_j) (/ sqrt(D) when scaled)."""
    if queries.ndim != 2 or frames.ndim != 2:
        raise ShapeError(f"need 2-D queries/frames, got {queries.shape}, {frames.shape}")
    if mask.n_queries != queries.shape[0] or mask.n_frames != frames.shape[0]:
        raise ShapeError(
            f"mask is {mask.n_queries}x{mask.n_frames}, inputs are "
            f"{queries.shape[0]} queries x {frames.shape[0]} frames"
        )
    p = lambda name: store.tensor(f"{prefix}/{name}")
    q = linear(queries, p("wq"), p("bq"))
    k = linear(frames, p("wk"), p("bk"))
    v = linear(frames, p("wv"), p("bv"))
    logits = matmul(q, swap_last(k))
    if scale_logits:
        logits = mul(logits, 1.0 / math.sqrt(queries.shape[1]))
    probs = masked_softmax(logits, mask.prefix_lengths)
    return matmul(probs, v)


def decode(
    store: ParamStore,
    frames: Tensor,
    mask: CausalMask,
    *,
    blocks: int,
    scale_logits: bool = True,
    prefix: str = "decoder",
) -> Tensor:
    """Run the query stack against encoded frames; returns (N_q, D)."""
    x = store.tensor(f"{prefix}/queries")
    for b in range(blocks):
        p = lambda name: store.tensor(f"{prefix}/{b}/{name}")
        xn = layer_norm(x, p("ln1/gain"), p("ln1/bias"))
        q = linear(xn, p("self/wq"), p("self/bq"))
        k = linear(xn, p("self/wk"), p("self/bk"))
        v = linear(xn, p("self/wv"), p("self/bv"))
        x = x + linear(attention(q, k, v, 1), p("self/wo"), p("self/bo"))
        xn = layer_norm(x, p("ln2/gain"), p("ln2/bias"))
        x = x + causal_cross_attention(
            store, f"{prefix}/{b}/cross", xn, frames, mask, scale_logits
        )
        xn = layer_norm(x, p("ln3/gain"), p("ln3/bias"))
        x = x + linear(relu(linear(xn, p("ffn/w1"), p("ffn/b1"))), p("ffn/w2"), p("ffn/b2"))
    return layer_norm(x, store.tensor(f"{prefix}/ln_out/gain"),
                      store.tensor(f"{prefix}/ln_out/bias"))


def predict(
    store: ParamStore, queries_out: Tensor, n_frames: int, prefix: str = "heads"
) -> tuple[Tensor, Tensor]:
    """Heads over decoded queries.

    Returns (boxes, logits): boxes is (N_q, 2) frame-unit (T_s, T_e)
    with 0 <= T_s <= T_e <= n by construction; logits is (N_q, K+1)
    with the background class last.
    """
    p = lambda name: store.tensor(f"{prefix}/{name}")
    reg = linear(relu(linear(queries_out, p("reg/w1"), p("reg/b1"))), p("reg/w2"), p("reg/b2"))
    cl = sigmoid(reg)  # (N_q, 2) -> columns (center, length)
    center, length = narrow(cl, 1, 0, 1), narrow(cl, 1, 1, 1)
    half = mul(length, 0.5)
    ts = clamp(center - half, 0.0, 1.0)
    te = clamp(center + half, 0.0, 1.0)
    boxes = mul(concat([ts, te], axis=1), float(n_frames))
    logits = linear(
        relu(linear(queries_out, p("cls/w1"), p("cls/b1"))), p("cls/w2"), p("cls/b2")
    )
    return boxes, logits
