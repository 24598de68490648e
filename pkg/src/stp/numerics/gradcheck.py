"""Finite-difference validation of the gradient tape.

Central differences in float64 against the analytic backward pass, with
a repeated-forward determinism check first: if two evaluations of the
loss disagree bitwise, finite differencing is meaningless and we fail
fast with a diagnostic instead of a confusing tolerance error.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import NumericsError
from .params import ParamStore
from .tensor import Tensor


def grad_check(
    loss_fn: Callable[[], Tensor],
    store: ParamStore,
    eps: float = 1e-5,
    atol: float = 1e-4,
) -> float:
    """Return the worst relative error |analytic - numeric| / max(1, |numeric|)
    over every parameter entry; raises NumericsError if it exceeds `atol`."""
    for _, t in store.items():
        if t.dtype != np.float64:
            raise NumericsError("grad_check requires float64 parameters")

    base1 = loss_fn().item()
    base2 = loss_fn().item()
    if base1 != base2:
        raise NumericsError(
            f"loss is not deterministic ({base1!r} vs {base2!r}); "
            "finite differences would be meaningless"
        )

    store.zero_grads()
    loss_fn().backward()
    analytic = {k: t.grad.copy() for k, t in store.items()}

    worst = 0.0
    worst_at = ""
    for key, t in store.items():
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_fn().item()
            flat[i] = orig - eps
            down = loss_fn().item()
            flat[i] = orig
            numeric = (up - down) / (2.0 * eps)
            a = analytic[key].reshape(-1)[i]
            rel = abs(a - numeric) / max(1.0, abs(numeric))
            if rel > worst:
                worst, worst_at = rel, f"{key}[{i}]"
    if worst > atol:
        raise NumericsError(f"gradient check failed at {worst_at}: rel err {worst:.3e}")
    return worst
