"""Dense tensors with a dynamic reverse-mode gradient tape.

Every operation records its inputs and a backward closure on the output
tensor; calling ``backward`` on a scalar walks the tape in reverse
topological order and accumulates gradients into every reachable leaf.
The graph is rebuilt on each forward pass, so data-dependent masking and
segment caching need no special handling.

Array storage is numpy (row-major, float32 or float64); the handful of
hot non-BLAS kernels are dispatched through :mod:`stp._backend`.
"""

from __future__ import annotations

import contextlib
from typing import Iterable, Sequence

import numpy as np

from .. import _backend
from ..errors import NumericsError, ShapeError

DEFAULT_DTYPE = np.float64


def set_default_dtype(dtype) -> None:
    """Set the dtype used for newly created tensors (f32 or f64)."""
    global DEFAULT_DTYPE
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise NumericsError(f"unsupported dtype {dt}; use float32 or float64")
    DEFAULT_DTYPE = dt.type


class OpCounter:
    """Counts op invocations; ``linear_rows`` counts row-vectors pushed
    through affine maps (one MLP application per row)."""

    def __init__(self):
        self.counts: dict[str, int] = {}
        self.linear_rows = 0

    def add(self, op: str) -> None:
        self.counts[op] = self.counts.get(op, 0) + 1


_active_counter: OpCounter | None = None


@contextlib.contextmanager
def count_ops():
    """Context manager yielding an OpCounter recording every tape op."""
    global _active_counter
    prev = _active_counter
    counter = OpCounter()
    _active_counter = counter
    try:
        yield counter
    finally:
        _active_counter = prev


def _record(op: str) -> None:
    if _active_counter is not None:
        _active_counter.add(op)


def _ensure_finite(arr: np.ndarray, op: str) -> None:
    if arr.size and not np.isfinite(arr).all():
        raise NumericsError(f"non-finite values produced by op '{op}'")


class Tensor:
    """An immutable-by-convention dense array plus tape bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fn", "_op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            raise TypeError("wrap raw arrays, not Tensors")
        arr = np.asarray(data)
        # one uniform precision per process unless explicitly overridden
        arr = arr.astype(dtype if dtype is not None else DEFAULT_DTYPE, copy=False)
        if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)  # ascontiguousarray would 1-d-ify 0-d
        _ensure_finite(arr, "leaf")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._grad_fn = None
        self._op = "leaf"

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """A fresh leaf sharing no tape history (data is copied)."""
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op!r}, requires_grad={self.requires_grad})"

    # -- backward ------------------------------------------------------------

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's .grad."""
        if self.data.size != 1:
            raise NumericsError(f"backward requires a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            return
        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            # grad can be None for non-differentiable parents swept into the
            # topo order (constants, detached caches): nothing to push.
            if node._grad_fn is None or node.grad is None:
                continue
            _ensure_finite(node.grad, f"backward of '{node._op}'")
            node._grad_fn(node.grad)
        for node in order:
            if node._grad_fn is not None:  # free intermediate grads
                node.grad = None
            elif node.grad is not None:
                _ensure_finite(node.grad, "backward (leaf gradient)")

    # -- operator sugar --------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other, like=self), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not a tape op; multiply by a reciprocal")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(x, dtype=dtype)


def _toposort(root: Tensor) -> list[Tensor]:
    """Iterative DFS; asserts the tape is acyclic (it must be, tensors are
    append-only)."""
    order: list[Tensor] = []
    state: dict[int, int] = {id(root): 0}
    stack: list[tuple[Tensor, Iterable[Tensor]]] = [(root, iter(root._parents))]
    while stack:
        node, parents = stack[-1]
        advanced = False
        for p in parents:
            s = state.get(id(p))
            if s == 0:
                raise AssertionError("cycle detected in gradient tape")
            if s is None:
                state[id(p)] = 0
                stack.append((p, iter(p._parents)))
                advanced = True
                break
        if not advanced:
            state[id(node)] = 1
            order.append(node)
            stack.pop()
    return order


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _make(data: np.ndarray, parents: Sequence[Tensor], grad_fn, op: str) -> Tensor:
    _ensure_finite(data, op)
    _record(op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = any(p.requires_grad for p in parents)
    out.grad = None
    if out.requires_grad:
        out._parents = tuple(parents)
        out._grad_fn = grad_fn
    else:  # prune the graph below non-differentiable results
        out._parents = ()
        out._grad_fn = None
    out._op = op
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum-reduce a broadcast gradient back to `shape`."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- arithmetic ---------------------------------------------------------------


def add(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)

    def gfn(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _make(a.data + b.data, (a, b), gfn, "add")


def sub(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)

    def gfn(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _make(a.data - b.data, (a, b), gfn, "sub")


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)

    def gfn(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(a.data * b.data, (a, b), gfn, "mul")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")

    def gfn(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        _accum(a, _unbroadcast(ga, a.data.shape))
        _accum(b, _unbroadcast(gb, b.data.shape))

    return _make(a.data @ b.data, (a, b), gfn, "matmul")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map over the last axis: x[..., d_in] @ w[d_in, d_out] + b."""
    x, w = as_tensor(x), as_tensor(w)
    if w.ndim != 2:
        raise ShapeError(f"linear weight must be 2-D, got {w.shape}")
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear dimensions disagree: x {x.shape} vs w {w.shape}")
    d_in, d_out = w.shape
    out = x.data @ w.data
    if b is not None:
        b = as_tensor(b, like=x)
        if b.shape != (d_out,):
            raise ShapeError(f"linear bias must have shape ({d_out},), got {b.shape}")
        out = out + b.data
    if _active_counter is not None:
        _active_counter.linear_rows += x.size // d_in if d_in else 0

    def gfn(g):
        g2 = g.reshape(-1, d_out)
        x2 = x.data.reshape(-1, d_in)
        _accum(x, (g @ w.data.T).reshape(x.data.shape))
        _accum(w, x2.T @ g2)
        if b is not None:
            _accum(b, g2.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return _make(out, parents, gfn, "linear")


# -- shape ops ----------------------------------------------------------------


def reshape(x: Tensor, *shape) -> Tensor:
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    x = as_tensor(x)
    old = x.data.shape

    def gfn(g):
        _accum(x, g.reshape(old))

    return _make(np.ascontiguousarray(x.data.reshape(shape)), (x,), gfn, "reshape")


def permute(x: Tensor, axes: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def gfn(g):
        _accum(x, np.ascontiguousarray(g.transpose(inv)))

    return _make(np.ascontiguousarray(x.data.transpose(axes)), (x,), gfn, "permute")


def swap_last(x: Tensor) -> Tensor:
    """Transpose the trailing two axes (the K^T of attention)."""
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return permute(x, axes)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of zero tensors")
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def gfn(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accum(t, np.ascontiguousarray(g[tuple(sl)]))

    return _make(
        np.ascontiguousarray(np.concatenate([t.data for t in tensors], axis=axis)),
        tuple(tensors),
        gfn,
        "concat",
    )


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Slice `length` entries from `start` along `axis`."""
    x = as_tensor(x)
    if start < 0 or start + length > x.data.shape[axis]:
        raise ShapeError(
            f"narrow [{start}:{start + length}) out of range for axis {axis} of {x.shape}"
        )
    sl = [slice(None)] * x.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)

    def gfn(g):
        full = np.zeros_like(x.data)
        full[sl] = g
        _accum(x, full)

    return _make(np.ascontiguousarray(x.data[sl]), (x,), gfn, "narrow")


# -- reductions ---------------------------------------------------------------


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)

    def gfn(g):
        if axis is None:
            _accum(x, np.broadcast_to(g, x.data.shape).copy())
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            _accum(x, np.broadcast_to(gg, x.data.shape).copy())

    return _make(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), gfn, "sum")


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    denom = x.data.size if axis is None else x.data.shape[axis]
    if denom == 0:
        raise ShapeError("mean over an empty axis")
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / denom)


# -- elementwise nonlinearities -------------------------------------------------


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)

    def gfn(g):
        _accum(x, g * (x.data > 0))

    return _make(np.maximum(x.data, 0), (x,), gfn, "relu")


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    # stable two-sided evaluation
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    out[~pos] = ex / (1.0 + ex)

    def gfn(g):
        _accum(x, g * out * (1.0 - out))

    return _make(out, (x,), gfn, "sigmoid")


def exp(x: Tensor) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over="ignore"):  # inf is caught by the finite check
        out = np.exp(x.data)

    def gfn(g):
        _accum(x, g * out)

    return _make(out, (x,), gfn, "exp")


def log(x: Tensor) -> Tensor:
    x = as_tensor(x)

    def gfn(g):
        _accum(x, g / x.data)

    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.log(x.data)
    return _make(out, (x,), gfn, "log")


def powc(x: Tensor, c: float) -> Tensor:
    """x ** c for a constant exponent; d/dx = c * x**(c-1) with the
    convention that the gradient at x == 0 is 0 for c >= 1."""
    x = as_tensor(x)
    c = float(c)
    out = x.data**c

    def gfn(g):
        if c == 0.0:
            _accum(x, np.zeros_like(x.data))
            return
        base = x.data
        with np.errstate(divide="ignore", invalid="ignore"):
            d = c * base ** (c - 1.0)
        d = np.where(base == 0.0, 0.0, d)
        _accum(x, g * d)

    return _make(out, (x,), gfn, "pow")


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; gradient passes where the input was not clipped."""
    x = as_tensor(x)
    inside = (x.data >= lo) & (x.data <= hi)

    def gfn(g):
        _accum(x, g * inside)

    return _make(np.clip(x.data, lo, hi), (x,), gfn, "clamp")


def smooth_l1(x: Tensor) -> Tensor:
    """Elementwise Huber-style penalty: 0.5 x^2 if |x|<1 else |x|-0.5."""
    x = as_tensor(x)
    a = np.abs(x.data)
    out = np.where(a < 1.0, 0.5 * x.data * x.data, a - 0.5)

    def gfn(g):
        _accum(x, g * np.where(a < 1.0, x.data, np.sign(x.data)))

    return _make(out, (x,), gfn, "smooth_l1")


# -- softmax family -------------------------------------------------------------


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax over the last axis, max-stabilized."""
    x = as_tensor(x)
    if x.ndim < 1:
        raise ShapeError("softmax_rows needs at least 1-D input")
    n = x.shape[-1]
    x2 = x.data.reshape(-1, n)
    y2 = _backend.softmax_rows_fwd(x2)
    out = y2.reshape(x.data.shape)

    def gfn(g):
        gx = _backend.softmax_rows_bwd(y2, np.ascontiguousarray(g.reshape(-1, n)))
        _accum(x, gx.reshape(x.data.shape))

    return _make(out, (x,), gfn, "softmax_rows")


def masked_softmax(x: Tensor, prefix: np.ndarray) -> Tensor:
    """Softmax over the last axis restricted to leading prefixes.

    `prefix` holds, per row (leading axes flattened), how many initial
    entries are visible; it must be >= 1 everywhere (asserted: the mask
    type forbids empty rows). Masked positions get probability exactly 0
    and are bit-independent of their logits.
    """
    x = as_tensor(x)
    n = x.shape[-1]
    pref = np.ascontiguousarray(np.asarray(prefix, dtype=np.int64).reshape(-1))
    rows = x.data.size // n if n else 0
    if pref.size != rows:
        raise ShapeError(f"prefix count {pref.size} does not match rows {rows}")
    assert (pref >= 1).all(), "masked_softmax: fully-masked row (mask invariant violated)"
    x2 = np.ascontiguousarray(x.data.reshape(-1, n))
    y2 = _backend.masked_softmax_fwd(x2, pref)
    out = y2.reshape(x.data.shape)

    def gfn(g):
        gx = _backend.masked_softmax_bwd(y2, np.ascontiguousarray(g.reshape(-1, n)))
        _accum(x, gx.reshape(x.data.shape))

    return _make(out, (x,), gfn, "masked_softmax")


def log_softmax(x: Tensor) -> Tensor:
    """Log of softmax over the last axis, computed stably."""
    x = as_tensor(x)
    m = x.data.max(axis=-1, keepdims=True)
    shifted = x.data - m
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - lse

    def gfn(g):
        p = np.exp(out)
        _accum(x, g - p * g.sum(axis=-1, keepdims=True))

    return _make(out, (x,), gfn, "log_softmax")


def gather_last(x: Tensor, idx: np.ndarray) -> Tensor:
    """Pick one entry per row along the last axis: out[i] = x[i, idx[i]]."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"gather_last expects a 2-D tensor, got {x.shape}")
    idx = np.asarray(idx, dtype=np.int64).reshape(-1)
    if idx.shape[0] != x.shape[0]:
        raise ShapeError(f"index count {idx.shape[0]} does not match rows {x.shape[0]}")
    rows = np.arange(x.shape[0])

    def gfn(g):
        full = np.zeros_like(x.data)
        full[rows, idx] = g
        _accum(x, full)

    return _make(np.ascontiguousarray(x.data[rows, idx]), (x,), gfn, "gather_last")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm params must have shape ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def gfn(g):
        gxhat = g * gain.data
        _accum(
            x,
            inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                   - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)),
        )
        axes = tuple(range(g.ndim - 1))
        _accum(gain, (g * xhat).sum(axis=axes))
        _accum(bias, g.sum(axis=axes))

    return _make(out, (x, gain, bias), gfn, "layer_norm")
