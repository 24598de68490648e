"""Spatial-temporal action localization at synthetic desk scale.

Two per-frame feature streams (dense temporal features and skeleton
keypoint distances) are fused by channel exchange, encoded by a
segment-recurrent transformer, and decoded by causally masked learnable
queries into scored action segments, trained with matched focal +
smooth-l1 losses and evaluated with overlap-based metrics.
"""

from . import _backend
from .errors import (
    STPError,
    ShapeError,
    NumericsError,
    ParamError,
    ConfigError,
    GenerationError,
    FormatError,
    InputError,
)

__version__ = "0.1.0"
__all__ = [
    "_backend",
    "STPError",
    "ShapeError",
    "NumericsError",
    "ParamError",
    "ConfigError",
    "GenerationError",
    "FormatError",
    "InputError",
    "__version__",
]
