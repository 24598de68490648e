"""Per-frame feature sequences."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ShapeError
from ..numerics import Tensor, as_tensor, reshape


@dataclass
class FeatureClip:
    """A (T, C, L) feature sequence: T frames, C channels, token width L.

    L is 1 everywhere in this package's pipelines; the axis is kept so
    shapes stay explicit at module boundaries.
    """

    data: Tensor

    def __post_init__(self):
        if not isinstance(self.data, Tensor):
            self.data = as_tensor(self.data)
        if self.data.ndim != 3:
            raise ShapeError(f"feature clip must be (T, C, L), got {self.data.shape}")
        if min(self.data.shape) < 1:
            raise ShapeError(f"feature clip dims must be positive, got {self.data.shape}")

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @staticmethod
    def from_frames(x) -> "FeatureClip":
        """Wrap a (T, C) array/tensor as a width-1 clip."""
        x = as_tensor(x)
        if x.ndim != 2:
            raise ShapeError(f"expected (T, C), got {x.shape}")
        return FeatureClip(reshape(x, x.shape[0], x.shape[1], 1))

    def flat(self) -> Tensor:
        """(T, C*L) view for the per-frame flattening stage."""
        t, c, l = self.data.shape
        return reshape(self.data, t, c * l)
