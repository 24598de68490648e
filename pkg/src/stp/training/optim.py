"""AdamW with decoupled weight decay and the decayed-cosine schedule.

lr(t) = lr0 * (0.5 * (1 + cos(pi * t / t_max)))^power, the adopted
reading of "cosine decay with power 0.9"; the alternative reading —
polynomial decay lr0 * (1 - t/t_max)^power — stays available behind
`train.schedule=poly`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import _backend
from ..errors import ConfigError
from ..numerics import ParamStore

SCHEDULES = ("cosine", "poly")


@dataclass(frozen=True)
class OptConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    power: float = 0.9
    schedule: str = "cosine"

    def __post_init__(self):
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"unknown schedule {self.schedule!r}; choose from {SCHEDULES}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("betas must lie in [0, 1)")
        if self.lr <= 0 or self.eps <= 0:
            raise ConfigError("lr and eps must be positive")


def lr_at(step: int, t_max: int, cfg: OptConfig) -> float:
    """Learning rate for 0-based step `step` of `t_max` total steps."""
    if t_max < 1:
        raise ConfigError(f"t_max must be >= 1, got {t_max}")
    frac = min(max(step / t_max, 0.0), 1.0)
    if cfg.schedule == "cosine":
        base = 0.5 * (1.0 + math.cos(math.pi * frac))
    else:
        base = 1.0 - frac
    return cfg.lr * base**cfg.power


class AdamW:
    """Owns first/second moment buffers keyed by parameter path."""

    def __init__(self, store: ParamStore, cfg: OptConfig):
        self.store = store
        self.cfg = cfg
        self.step_count = 0
        self._m = {k: np.zeros_like(t.data) for k, t in store.items()}
        self._v = {k: np.zeros_like(t.data) for k, t in store.items()}

    def step(self, lr: float) -> None:
        self.step_count += 1
        c = self.cfg
        for key, t in self.store.items():
            if t.grad is None:
                continue
            _backend.adamw_update(
                t.data, t.grad, self._m[key], self._v[key],
                lr, c.beta1, c.beta2, c.eps, c.weight_decay, self.step_count,
            )

    # -- checkpoint plumbing: buffers ride along under optim/* paths ----------

    def state_tensors(self) -> dict[str, np.ndarray]:
        out = {"optim/step": np.array([float(self.step_count)])}
        for key in self._m:
            out[f"optim/m/{key}"] = self._m[key]
            out[f"optim/v/{key}"] = self._v[key]
        return out

    def load_state(self, tensors: dict[str, np.ndarray]) -> None:
        self.step_count = int(tensors["optim/step"][0])
        for key in self._m:
            self._m[key] = np.ascontiguousarray(tensors[f"optim/m/{key}"])
            self._v[key] = np.ascontiguousarray(tensors[f"optim/v/{key}"])
