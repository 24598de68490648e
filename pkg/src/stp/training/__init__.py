from .losses import LossConfig, focal_loss, smooth_l1_loss, total_loss
from .matching import MatchResult, canonical_order, match, match_cost_matrix
from .optim import AdamW, OptConfig, lr_at
from .loop import TrainResult, clip_loss, dataset_metrics, load_checkpoint_into, train

__all__ = [
    "LossConfig",
    "focal_loss",
    "smooth_l1_loss",
    "total_loss",
    "MatchResult",
    "canonical_order",
    "match",
    "match_cost_matrix",
    "AdamW",
    "OptConfig",
    "lr_at",
    "TrainResult",
    "clip_loss",
    "dataset_metrics",
    "load_checkpoint_into",
    "train",
]
