"""Classification and localization losses.

Focal term per query (background is the last class index):

    -a_t (1 - p_t)^gamma log p_t,   a_t = alpha for foreground targets
                                    and (1 - alpha) for background.

p_t comes from a stable log-softmax, so gamma=0, alpha=1 collapses to
exact cross-entropy (no epsilon fudging). Localization is the
elementwise smooth-l1 penalty on normalized endpoints, summed over
(start, end) per matched query.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..numerics import (
    Tensor,
    concat,
    exp,
    gather_last,
    log_softmax,
    mul,
    narrow,
    powc,
    reshape,
    smooth_l1,
    tmean,
    tsum,
)
from ..segments import ActionSegment
from .matching import MatchResult


@dataclass(frozen=True)
class LossConfig:
    l_cls: float = 1.0
    l_reg: float = 1.5
    gamma: float = 2.0
    alpha: float = 0.25

    def __post_init__(self):
        for name in ("l_cls", "l_reg", "gamma", "alpha"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss weight {name} must be non-negative")


def focal_loss(logits: Tensor, targets: np.ndarray, gamma: float, alpha: float) -> Tensor:
    """Mean focal loss over rows; `targets` in [0, K] with K = background."""
    if logits.ndim != 2:
        logits = reshape(logits, 1, logits.shape[-1])
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    k_back = logits.shape[-1] - 1
    if (targets < 0).any() or (targets > k_back).any():
        raise ConfigError(f"target class outside [0, {k_back}]")
    logp = gather_last(log_softmax(logits), targets)
    weights = np.where(targets == k_back, 1.0 - alpha, alpha)
    ce = mul(-logp, Tensor(weights))
    if gamma == 0.0:
        # skip the (1-p_t)^0 factor: pow backward would form 0*inf at p_t=1
        return tmean(ce)
    focus = powc(Tensor(np.ones(targets.shape)) - exp(logp), gamma)
    return tmean(mul(focus, ce))


def smooth_l1_loss(pred: Tensor, gt: np.ndarray) -> Tensor:
    """Sum over coordinates of the elementwise smooth-l1 penalty on
    (pred - gt); inputs are normalized endpoint pairs."""
    diff = pred - Tensor(np.asarray(gt, dtype=np.float64))
    return tsum(smooth_l1(diff))


def total_loss(
    boxes: Tensor,
    logits: Tensor,
    gts: list[ActionSegment],
    result: MatchResult,
    n_frames: int,
    cfg: LossConfig,
) -> tuple[Tensor, float, float]:
    """l_cls * mean focal over all queries + l_reg * mean smooth-l1 over
    matched queries. Returns (loss tensor, cls part, reg part)."""
    n_q = logits.shape[0]
    k_back = logits.shape[-1] - 1
    targets = np.full(n_q, k_back, dtype=np.int64)
    for q, g in result.pairs:
        targets[q] = result.gts[g].label
    cls_term = focal_loss(logits, targets, cfg.gamma, cfg.alpha)

    if result.pairs:
        rows = [narrow(boxes, 0, q, 1) for q, _ in result.pairs]
        pred = mul(concat(rows, axis=0), 1.0 / n_frames)
        gt = np.array(
            [[result.gts[g].start / n_frames, result.gts[g].end / n_frames]
             for _, g in result.pairs]
        )
        reg_term = mul(smooth_l1_loss(pred, gt), 1.0 / len(result.pairs))
    else:
        reg_term = Tensor(np.zeros(()))

    loss = mul(cls_term, cfg.l_cls) + mul(reg_term, cfg.l_reg)
    return loss, cls_term.item(), reg_term.item()
