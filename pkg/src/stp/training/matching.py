"""One-to-one assignment of ground truths to prediction queries.

Minimum-total-cost matching (Hungarian algorithm via scipy) with

    cost(q, g) = l_cls * (1 - softmax prob of g's class)
               + l_reg * (|T_s - gs| + |T_e - ge|) / n

Ground truths are put into canonical (start, end, class) order before
solving so the result — and therefore the loss — is invariant under
permutations of the ground-truth list.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..errors import ConfigError
from ..segments import ActionSegment


@dataclass(frozen=True)
class MatchResult:
    """pairs[i] = (query index, index into the canonically sorted GTs)."""

    pairs: tuple[tuple[int, int], ...]
    gts: tuple[ActionSegment, ...]  # canonical order referenced by pairs

    def matched_queries(self) -> dict[int, ActionSegment]:
        return {q: self.gts[g] for q, g in self.pairs}


def canonical_order(gts: list[ActionSegment]) -> tuple[ActionSegment, ...]:
    return tuple(sorted(gts, key=lambda s: (s.start, s.end, s.label)))


def match_cost_matrix(
    boxes: np.ndarray,
    class_probs: np.ndarray,
    gts: tuple[ActionSegment, ...],
    n_frames: int,
    l_cls: float,
    l_reg: float,
) -> np.ndarray:
    n_q = boxes.shape[0]
    cost = np.zeros((n_q, len(gts)))
    for j, g in enumerate(gts):
        cls_term = 1.0 - class_probs[:, g.label]
        reg_term = (np.abs(boxes[:, 0] - g.start) + np.abs(boxes[:, 1] - g.end)) / n_frames
        cost[:, j] = l_cls * cls_term + l_reg * reg_term
    return cost


def match(
    boxes: np.ndarray,
    class_probs: np.ndarray,
    gts: list[ActionSegment],
    n_frames: int,
    l_cls: float = 1.0,
    l_reg: float = 1.5,
) -> MatchResult:
    """`boxes` is (N_q, 2) frame-unit endpoints; `class_probs` is the
    (N_q, K+1) softmax table. Every ground truth gets exactly one query."""
    n_q = boxes.shape[0]
    if len(gts) > n_q:
        raise ConfigError(f"{len(gts)} ground truths exceed {n_q} queries")
    ordered = canonical_order(gts)
    if not ordered:
        return MatchResult((), ())
    cost = match_cost_matrix(boxes, class_probs, ordered, n_frames, l_cls, l_reg)
    rows, cols = linear_sum_assignment(cost)
    pairs = tuple(sorted((int(q), int(g)) for q, g in zip(rows, cols)))
    return MatchResult(pairs, ordered)
