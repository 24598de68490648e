"""Inference post-processing and metrics.

AO-Score protocol: walk ground truths in start-time order; each picks
the same-class prediction with the highest temporal overlap among those
not yet consumed, and consumes it (a prediction with zero overlap is
not consumed — consuming it would waste it without helping the ground
truth, and a spurious disjoint prediction must keep costing its own
zero). Ground truths with no overlapping candidate record 0; every
prediction left over records 0; the score is the mean of all records.
"""

from __future__ import annotations

import math
from collections import Counter

from .errors import ConfigError, InputError
from .segments import ActionSegment


def overlap_score(a: ActionSegment, b: ActionSegment) -> float:
    """Temporal intersection over union of the two spans (classes are
    the caller's concern). Two identical zero-length spans count as 1."""
    inter = min(a.end, b.end) - max(a.start, b.start)
    union = max(a.end, b.end) - min(a.start, b.start)
    if union == 0.0:
        return 1.0
    return max(inter, 0.0) / union


def ao_score(
    predictions: list[ActionSegment],
    gts: list[ActionSegment],
    allow_reuse: bool = False,
) -> float:
    """Mean overlap over matched GTs, unmatched GTs, and leftover
    predictions; both lists empty scores 1.0 (nothing to get wrong)."""
    if not predictions and not gts:
        return 1.0
    consumed = [False] * len(predictions)
    matched = [False] * len(predictions)  # reuse: matched but not consumed
    records: list[float] = []
    # all tie-breaks use segment fields only, so the result is invariant
    # under permutations of either input list
    for g in sorted(gts, key=lambda s: (s.start, s.end, s.label)):
        best, best_key = None, (0.0,)
        for i, p in enumerate(predictions):
            if consumed[i] or p.label != g.label:
                continue
            os = overlap_score(p, g)
            key = (os, -p.start, -p.end, p.score)
            if os > 0.0 and (best is None or key > best_key):
                best, best_key = i, key
        if best is not None:
            records.append(best_key[0])
            matched[best] = True
            if not allow_reuse:
                consumed[best] = True
        else:
            records.append(0.0)
    records.extend(0.0 for m in matched if not m)
    return sum(records) / len(records)


def soft_nms(
    predictions: list[ActionSegment],
    sigma: float = 0.5,
    score_threshold: float = 0.2,
) -> list[ActionSegment]:
    """Gaussian score decay among same-class overlaps.

    Repeatedly keep the highest-score remaining segment (ties: earlier
    start, then lower class id) and decay every other same-class
    segment's score by exp(-os^2 / sigma); segments falling below the
    threshold are dropped. Spans and classes are never altered.
    """
    if sigma <= 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    pool = list(predictions)
    scores = [p.score for p in pool]
    kept: list[ActionSegment] = []
    alive = [s >= score_threshold for s in scores]
    key = lambda i: (scores[i], -pool[i].start, -pool[i].label, -pool[i].end)
    while True:
        best = -1
        for i, a in enumerate(alive):
            if a and (best == -1 or key(i) > key(best)):
                best = i
        if best == -1:
            return kept
        p = pool[best]
        kept.append(ActionSegment(p.start, p.end, p.label, scores[best]))
        alive[best] = False
        for i, q in enumerate(pool):
            if not alive[i] or q.label != p.label:
                continue
            os = overlap_score(p, q)
            scores[i] *= math.exp(-(os * os) / sigma)
            if scores[i] < score_threshold:
                alive[i] = False


def accuracy(predicted: list[int], true: list[int]) -> tuple[float, float]:
    """(top1, mean1): overall fraction correct and the unweighted mean of
    per-class recall over classes present in `true`."""
    if len(predicted) != len(true):
        raise InputError(f"length mismatch: {len(predicted)} vs {len(true)}")
    if not true:
        raise InputError("accuracy of an empty list is undefined")
    top1 = sum(p == t for p, t in zip(predicted, true)) / len(true)
    totals = Counter(true)
    hits = Counter(t for p, t in zip(predicted, true) if p == t)
    mean1 = sum(hits[c] / n for c, n in totals.items()) / len(totals)
    return top1, mean1


def classification_pairs(
    predictions: list[ActionSegment], gts: list[ActionSegment]
) -> list[tuple[int, int]]:
    """(predicted class, true class) per ground truth, for accuracy.

    Each GT (in start order) takes the class of the best-overlapping
    unconsumed prediction of any class; GTs nothing overlaps get the
    never-correct marker -1.
    """
    consumed = [False] * len(predictions)
    pairs: list[tuple[int, int]] = []
    for g in sorted(gts, key=lambda s: (s.start, s.end, s.label)):
        best, best_key = None, (0.0,)
        for i, p in enumerate(predictions):
            if consumed[i]:
                continue
            os = overlap_score(p, g)
            key = (os, -p.start, -p.end, p.score, -p.label)
            if os > 0.0 and (best is None or key > best_key):
                best, best_key = i, key
        if best is None:
            pairs.append((-1, g.label))
        else:
            consumed[best] = True
            pairs.append((predictions[best].label, g.label))
    return pairs


def per_class_table(pairs: list[tuple[int, int]], num_classes: int) -> list[dict]:
    """Per-class GT count / correct count / recall rows for the report."""
    rows = []
    for c in range(num_classes):
        total = sum(1 for _, t in pairs if t == c)
        correct = sum(1 for p, t in pairs if t == c and p == c)
        rows.append(
            {
                "class": c,
                "ground_truths": total,
                "correct": correct,
                "recall": (correct / total) if total else None,
            }
        )
    return rows
