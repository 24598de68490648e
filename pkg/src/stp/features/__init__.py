from .positional import positional_embedding
from .types import FeatureClip
from .skeleton import (
    KEYPOINT_NAMES,
    NUM_KEYPOINTS,
    EDGES,
    adjacency,
    normalized_adjacency,
    pairwise_distances,
    node_features,
    gcn_distance_features,
)
from .synthetic import (
    GeneratorSpec,
    Clip,
    generate_clip,
    generate_dataset,
    load_clip,
    load_dataset,
    save_clip,
    signature_vectors,
    class_pair,
    class_signature,
)

__all__ = [
    "positional_embedding",
    "FeatureClip",
    "KEYPOINT_NAMES",
    "NUM_KEYPOINTS",
    "EDGES",
    "adjacency",
    "normalized_adjacency",
    "pairwise_distances",
    "node_features",
    "gcn_distance_features",
    "GeneratorSpec",
    "Clip",
    "generate_clip",
    "generate_dataset",
    "load_clip",
    "load_dataset",
    "save_clip",
    "signature_vectors",
    "class_pair",
    "class_signature",
]
