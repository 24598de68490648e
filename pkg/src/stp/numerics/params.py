"""Named parameter registry.

Parameters live under slash-delimited paths ("encoder/0/attn/wq"); the
store owns the canonical ordering (sorted paths) used by checkpoints,
the optimizer state, and gradient checking.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from ..errors import ParamError
from .tensor import Tensor
from . import tensor_io


class ParamStore:
    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, path: str, value: np.ndarray) -> Tensor:
        if path in self._params:
            raise ParamError(f"duplicate parameter path {path!r}")
        if not path or path.startswith("/") or path.endswith("/"):
            raise ParamError(f"malformed parameter path {path!r}")
        t = Tensor(np.asarray(value), requires_grad=True)
        self._params[path] = t
        return t

    def tensor(self, path: str) -> Tensor:
        try:
            return self._params[path]
        except KeyError:
            raise ParamError(f"unknown parameter path {path!r}") from None

    def __contains__(self, path: str) -> bool:
        return path in self._params

    def paths(self) -> list[str]:
        return sorted(self._params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        for path in self.paths():
            yield path, self._params[path]

    def total(self) -> int:
        return sum(t.size for t in self._params.values())

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.grad = np.zeros_like(t.data)

    def save(self, path) -> None:
        tensor_io.save_checkpoint(path, {k: t.data for k, t in self.items()})

    def load(self, path) -> None:
        """Load values into existing parameters; paths and shapes must
        match the store exactly."""
        loaded = tensor_io.load_checkpoint(path)
        have, want = set(loaded), set(self._params)
        if have != want:
            missing = sorted(want - have)
            extra = sorted(have - want)
            raise ParamError(f"checkpoint mismatch: missing={missing} unexpected={extra}")
        for k, arr in loaded.items():
            t = self._params[k]
            if arr.shape != t.data.shape:
                raise ParamError(
                    f"shape mismatch for {k!r}: checkpoint {arr.shape} vs store {t.data.shape}"
                )
            t.data = np.ascontiguousarray(arr.astype(t.data.dtype, copy=False))
