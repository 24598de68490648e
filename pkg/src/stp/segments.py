"""Action segment record shared by generation, training, and evaluation."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InputError


@dataclass(frozen=True)
class ActionSegment:
    """An action instance spanning [start, end] in frame units.

    `score` is a prediction confidence; ground-truth segments carry 1.0.
    """

    start: float
    end: float
    label: int
    score: float = 1.0

    def __post_init__(self):
        if not (self.end >= self.start):
            raise InputError(f"segment end precedes start: [{self.start}, {self.end}]")
        if self.label < 0:
            raise InputError(f"segment label must be non-negative, got {self.label}")
        if not (0.0 <= self.score <= 1.0):
            raise InputError(f"segment score must lie in [0, 1], got {self.score}")

    @property
    def length(self) -> float:
        return self.end - self.start

    def to_dict(self) -> dict:
        return {"start": self.start, "end": self.end, "class": self.label, "score": self.score}

    @staticmethod
    def from_dict(d: dict) -> "ActionSegment":
        return ActionSegment(
            start=float(d["start"]),
            end=float(d["end"]),
            label=int(d["class"]),
            score=float(d.get("score", 1.0)),
        )
