"""Windowed least-squares estimate of the loss descent velocity.

Velocity is the *negated* OLS slope of loss against step, so a descending
loss has ``v > 0`` and a rising loss has ``v < 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

DEFAULT_ERROR_MULTIPLIER = 3.0


@dataclass(frozen=True, eq=False)
class LossWindow:
    steps: np.ndarray
    losses: np.ndarray

    def __post_init__(self) -> None:
        steps = np.asarray(self.steps, dtype=np.float64)
        losses = np.asarray(self.losses, dtype=np.float64)
        if steps.ndim != 1 or steps.shape != losses.shape:
            raise ValueError("steps and losses must be 1-d arrays of equal length")
        if steps.size and np.any(np.diff(steps) <= 0):
            raise ValueError("window steps must be strictly increasing")
        if not np.all(np.isfinite(losses)):
            raise ValueError("window losses must be finite")
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "losses", losses)

    @classmethod
    def from_losses(cls, losses: Sequence[float], start: int = 0) -> "LossWindow":
        """Window with unit step spacing beginning at ``start``."""
        losses = np.asarray(losses, dtype=np.float64)
        return cls(np.arange(start, start + losses.size, dtype=np.float64), losses)

    def __len__(self) -> int:
        return int(self.losses.size)

    @property
    def first_step(self) -> int:
        return int(self.steps[0])

    @property
    def last_step(self) -> int:
        return int(self.steps[-1])


@dataclass(frozen=True)
class SlopeEstimate:
    v: float
    residual_std: float
    e_bound: float


def fit_descent_velocity(
    window: LossWindow, error_multiplier: float = DEFAULT_ERROR_MULTIPLIER
) -> SlopeEstimate:
    """OLS fit of loss against step.

    ``residual_std`` uses the classical ``n - 2`` degrees of freedom and
    ``e_bound = error_multiplier * residual_std / sqrt(sum((t - t_mean)**2))``.
    """
    n = len(window)
    if n < 2:
        raise ValueError(f"need at least 2 points to fit a slope, got {n}")
    # re-center both axes; large step indices would otherwise cancel badly
    x = window.steps - window.steps.mean()
    sxx = float(x @ x)
    if sxx == 0.0:
        raise ValueError("zero variance in step indices")
    y = window.losses - window.losses.mean()
    slope = float(x @ y) / sxx
    if n > 2:
        resid = y - slope * x
        residual_std = math.sqrt(float(resid @ resid) / (n - 2))
    else:
        residual_std = 0.0
    se = residual_std / math.sqrt(sxx)
    return SlopeEstimate(v=-slope, residual_std=residual_std, e_bound=error_multiplier * se)


def window_mean(window: LossWindow) -> float:
    if len(window) == 0:
        raise ValueError("mean of an empty window")
    return float(window.losses.mean())


def ols_slope_std(noise_std: float, k: int) -> float:
    """Closed-form std of the OLS slope on ``k`` unit-spaced points with iid noise."""
    return noise_std * math.sqrt(12.0 / (k * (k * k - 1.0)))
