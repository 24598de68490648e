"""Upper-body skeleton graph and distance-stream features.

A fixed 13-keypoint layout (2-D image coordinates). Invisible keypoints
are stored as the (-1, -1) sentinel and excluded from distances; a
distance involving an invisible keypoint is -1.
"""

from __future__ import annotations

import numpy as np

from .. import _backend
from ..errors import ShapeError
from ..numerics import Tensor, linear, matmul, relu, tmean
from .types import FeatureClip

KEYPOINT_NAMES = (
    "head",
    "neck",
    "l_shoulder",
    "r_shoulder",
    "l_elbow",
    "r_elbow",
    "l_wrist",
    "r_wrist",
    "pelvis",
    "l_hip",
    "r_hip",
    "l_knee",
    "r_knee",
)
NUM_KEYPOINTS = len(KEYPOINT_NAMES)

# tree edges (12 for 13 nodes)
EDGES = (
    ("head", "neck"),
    ("neck", "l_shoulder"),
    ("neck", "r_shoulder"),
    ("l_shoulder", "l_elbow"),
    ("r_shoulder", "r_elbow"),
    ("l_elbow", "l_wrist"),
    ("r_elbow", "r_wrist"),
    ("neck", "pelvis"),
    ("pelvis", "l_hip"),
    ("pelvis", "r_hip"),
    ("l_hip", "l_knee"),
    ("r_hip", "r_knee"),
)

_INDEX = {name: i for i, name in enumerate(KEYPOINT_NAMES)}


def adjacency() -> np.ndarray:
    """Symmetric 0/1 adjacency of the skeleton tree, no self loops."""
    a = np.zeros((NUM_KEYPOINTS, NUM_KEYPOINTS))
    for u, v in EDGES:
        i, j = _INDEX[u], _INDEX[v]
        a[i, j] = a[j, i] = 1.0
    return a


def normalized_adjacency(a: np.ndarray | None = None) -> np.ndarray:
    """Symmetric renormalization D^{-1/2} (A + I) D^{-1/2}."""
    a = adjacency() if a is None else np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"adjacency must be square, got {a.shape}")
    if not np.array_equal(a, a.T):
        raise ShapeError("adjacency must be symmetric")
    ai = a + np.eye(a.shape[0])
    dinv = 1.0 / np.sqrt(ai.sum(axis=1))
    return ai * dinv[:, None] * dinv[None, :]


def pairwise_distances(points: np.ndarray, visible: np.ndarray | None = None) -> np.ndarray:
    """Per-frame euclidean distance matrices (T, J, J).

    `points` is (T, J, 2); entries equal to (-1, -1) are treated as
    invisible when `visible` is not given. Distances touching an
    invisible keypoint are -1.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 3 or points.shape[-1] != 2:
        raise ShapeError(f"points must be (T, J, 2), got {points.shape}")
    if visible is None:
        visible = ~np.all(points == -1.0, axis=-1)
    visible = np.asarray(visible, dtype=bool)
    if visible.shape != points.shape[:2]:
        raise ShapeError(f"visible must be (T, J), got {visible.shape}")
    return _backend.pairwise_distances(points, visible)


def node_features(points: np.ndarray, visible: np.ndarray | None = None) -> np.ndarray:
    """Per-node input vectors (T, J, 2 + J): coordinates (zeroed when
    invisible) concatenated with that node's distance row."""
    points = np.asarray(points, dtype=np.float64)
    if visible is None:
        visible = ~np.all(points == -1.0, axis=-1)
    visible = np.asarray(visible, dtype=bool)
    dist = pairwise_distances(points, visible)
    coords = np.where(visible[..., None], points, 0.0)
    return np.concatenate([coords, dist], axis=-1)


def gcn_distance_features(
    points: np.ndarray,
    layers: list[tuple[Tensor, Tensor]],
    visible: np.ndarray | None = None,
    a_hat: np.ndarray | None = None,
) -> FeatureClip:
    """Distance-stream encoding: stacked graph convolutions
    H <- act(A_hat H W + b) over the skeleton, mean-pooled over nodes.

    Returns a (T, d_out, 1) clip where d_out is the width of the last
    layer. ReLU between layers, linear final layer.
    """
    if not layers:
        raise ShapeError("gcn needs at least one layer")
    x = node_features(points, visible)
    a_hat = normalized_adjacency() if a_hat is None else np.asarray(a_hat, dtype=float)
    if a_hat.shape != (x.shape[1], x.shape[1]):
        raise ShapeError(f"a_hat shape {a_hat.shape} does not match {x.shape[1]} nodes")
    h = Tensor(x)
    a_t = Tensor(a_hat)
    for i, (w, b) in enumerate(layers):
        h = linear(matmul(a_t, h), w, b)
        if i + 1 < len(layers):
            h = relu(h)
    return FeatureClip.from_frames(tmean(h, axis=1))
