"""Base learning-rate schedules.

AdaLRS never replaces the base schedule; it multiplies whatever the schedule
returns by its own scale factor. Everything here is a pure function of
``(cfg, t)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass


class ScheduleKind(str, enum.Enum):
    CONSTANT = "constant"
    COSINE = "cosine"
    WSD = "wsd"


@dataclass(frozen=True)
class ScheduleConfig:
    kind: ScheduleKind = ScheduleKind.CONSTANT
    base_lr: float = 1e-4
    total_steps: int = 10_000
    min_lr_ratio: float = 0.0
    wsd_decay_fraction: float = 0.1

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        if not (self.base_lr > 0 and math.isfinite(self.base_lr)):
            raise ValueError(f"base_lr must be positive and finite, got {self.base_lr}")
        if self.total_steps < 1:
            raise ValueError(f"total_steps must be >= 1, got {self.total_steps}")
        if not 0.0 <= self.min_lr_ratio < 1.0:
            raise ValueError(f"min_lr_ratio must lie in [0, 1), got {self.min_lr_ratio}")
        if not 0.0 < self.wsd_decay_fraction < 1.0:
            raise ValueError(
                f"wsd_decay_fraction must lie in (0, 1), got {self.wsd_decay_fraction}"
            )

    @property
    def min_lr(self) -> float:
        return self.base_lr * self.min_lr_ratio

    @property
    def decay_start(self) -> float:
        """First step of the WSD linear decay, ``(1 - f) * T``."""
        return (1.0 - self.wsd_decay_fraction) * self.total_steps


def base_lr_at(cfg: ScheduleConfig, t: int) -> float:
    """Learning rate of the base schedule at step ``t`` (``0 <= t <= total_steps``)."""
    T = cfg.total_steps
    if not 0 <= t <= T:
        raise ValueError(f"step {t} outside [0, {T}]")
    lr0, lr_min = cfg.base_lr, cfg.min_lr

    if cfg.kind is ScheduleKind.CONSTANT:
        lr = lr0
    elif cfg.kind is ScheduleKind.COSINE:
        lr = lr_min + 0.5 * (lr0 - lr_min) * (1.0 + math.cos(math.pi * t / T))
    else:
        start = cfg.decay_start
        if t < start:
            lr = lr0
        else:
            frac = (t - start) / (T - start)
            # written from the floor up so that t = T gives lr_min exactly
            lr = lr_min + (lr0 - lr_min) * (1.0 - frac)

    if not math.isfinite(lr):
        raise ArithmeticError(f"non-finite learning rate at step {t}: {lr}")
    return lr
