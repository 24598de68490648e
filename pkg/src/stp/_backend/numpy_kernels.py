"""Pure numpy implementations of the hot kernels.

This module is the reference backend: always importable, used as the
fallback when the compiled extension is unavailable and as the ground
truth in backend-equivalence tests. All functions accept float32 or
float64 arrays; the compiled twin only handles float64 and the dispatch
layer routes other dtypes here.
"""

import numpy as np

NAME = "python"


def softmax_rows_fwd(x: np.ndarray) -> np.ndarray:
    """Row softmax of a 2-D array with max-subtraction for stability."""
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_bwd(y: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Gradient of row softmax given its output y and upstream gy."""
    dot = (y * gy).sum(axis=1, keepdims=True)
    return y * (gy - dot)


def masked_softmax_fwd(x: np.ndarray, prefix: np.ndarray) -> np.ndarray:
    """Row softmax restricted to the first prefix[i] entries of row i.

    Entries at or beyond the prefix are exactly 0 in the output and do
    not influence the visible entries in any way (bit-level
    independence): the masked logits are multiplied by a 0/1 mask before
    exponentiation, so any finite value there is annihilated exactly.
    """
    n = x.shape[1]
    mask = (np.arange(n)[None, :] < prefix[:, None]).astype(x.dtype)
    m = np.where(mask > 0, x, -np.inf).max(axis=1, keepdims=True)
    e = np.exp((x - m) * mask) * mask
    return e / e.sum(axis=1, keepdims=True)


def masked_softmax_bwd(y: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Gradient of masked row softmax; masked entries have y==0 so their
    gradient vanishes without needing the mask again."""
    dot = (y * gy).sum(axis=1, keepdims=True)
    return y * (gy - dot)


def pairwise_distances(points: np.ndarray, visible: np.ndarray) -> np.ndarray:
    """Per-frame Euclidean distance matrices with a -1 sentinel.

    points: (T, J, 2), visible: (T, J) of 0/1. Any entry whose row or
    column keypoint is invisible is set to -1 (distances are
    non-negative, so the sentinel is unambiguous).
    """
    diff = points[:, :, None, :] - points[:, None, :, :]
    d = np.sqrt((diff * diff).sum(axis=-1))
    vis = visible.astype(bool)
    bad = ~vis[:, :, None] | ~vis[:, None, :]
    d[bad] = -1.0
    return d


def adamw_update(
    param: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
    weight_decay: float,
    step: int,
) -> None:
    """One fused decoupled-weight-decay Adam step, in place.

    `step` is 1-based; bias correction uses beta^step.
    """
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    c1 = 1.0 - beta1**step
    c2 = 1.0 - beta2**step
    param *= 1.0 - lr * weight_decay
    param -= (lr / c1) * m / (np.sqrt(v / c2) + eps)
