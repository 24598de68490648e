"""Kernel backend selection.

The hot kernels exist twice: a compiled Cython extension (_ckernels) and
a pure numpy fallback (numpy_kernels). The compiled one is used when it
imported successfully and the array dtype is float64 (the only dtype it
is built for); everything else goes to numpy. Set STP_BACKEND=python to
force the fallback, STP_BACKEND=compiled to require the extension.

Matrix products are not dispatched here: both backends rely on
numpy/BLAS for those.
"""

import os

import numpy as np

from . import numpy_kernels

try:
    from . import _ckernels
except ImportError:
    _ckernels = None

_forced = os.environ.get("STP_BACKEND", "").strip().lower()
if _forced in ("python", "numpy"):
    _compiled = None
elif _forced == "compiled":
    if _ckernels is None:
        raise ImportError(
            "STP_BACKEND=compiled but the stp._backend._ckernels extension "
            "is not built; reinstall with a working C toolchain"
        )
    _compiled = _ckernels
elif _forced == "":
    _compiled = _ckernels
else:
    raise ValueError(f"unknown STP_BACKEND value: {_forced!r}")

BACKEND_NAME = "compiled" if _compiled is not None else "python"


def backends():
    """(name, module) pairs of every importable backend, numpy first."""
    out = [("python", numpy_kernels)]
    if _ckernels is not None:
        out.append(("compiled", _ckernels))
    return out


def _pick(*arrays):
    if _compiled is not None and all(a.dtype == np.float64 for a in arrays):
        return _compiled
    return numpy_kernels


def softmax_rows_fwd(x):
    return _pick(x).softmax_rows_fwd(x)


def softmax_rows_bwd(y, gy):
    return _pick(y, gy).softmax_rows_bwd(y, gy)


def masked_softmax_fwd(x, prefix):
    return _pick(x).masked_softmax_fwd(x, np.ascontiguousarray(prefix, dtype=np.int64))


def masked_softmax_bwd(y, gy):
    return _pick(y, gy).masked_softmax_bwd(y, gy)


def pairwise_distances(points, visible):
    pts = np.ascontiguousarray(points)
    vis = np.ascontiguousarray(visible, dtype=np.uint8)
    return _pick(pts).pairwise_distances(pts, vis)


def adamw_update(param, grad, m, v, lr, beta1, beta2, eps, weight_decay, step):
    # flat views so the compiled kernel sees 1-D buffers; updates hit the
    # originals because every stored array is C-contiguous
    _pick(param, grad, m, v).adamw_update(
        param.reshape(-1), grad.reshape(-1), m.reshape(-1), v.reshape(-1),
        lr, beta1, beta2, eps, weight_decay, step,
    )
