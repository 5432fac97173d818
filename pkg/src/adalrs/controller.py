"""The AdaLRS controller.

A small state machine that sits next to a training loop. Every step the loop
asks :attr:`AdaLRSController.multiplier` for the factor to apply to the base
schedule's LR, runs one optimizer step, and reports the loss back through
:meth:`AdaLRSController.observe`. The returned :class:`Action` tells the loop
when to snapshot training state and when to roll it back.

Phases::

    MONITORING --(velocity decayed)--> UPSCALE_RAMP --(k steps or early stop)-->
    VALIDATING --(k steps, decision)--> MONITORING

plus a boundary downscale straight out of MONITORING when the loss has been
rising for two consecutive windows.
"""

from __future__ import annotations

import enum
import functools
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .slope import (
    DEFAULT_ERROR_MULTIPLIER,
    LossWindow,
    SlopeEstimate,
    fit_descent_velocity,
    window_mean,
)

log = logging.getLogger(__name__)

# ties in |mean gap| closer than this (relative) go to the most recent window
_TIE_RTOL = 1e-9


class Phase(str, enum.Enum):
    MONITORING = "Monitoring"
    UPSCALE_RAMP = "UpscaleRamp"
    VALIDATING = "Validating"


class Decision(str, enum.Enum):
    KEEP_UPSCALE = "KeepUpscale"
    REVERT_AND_DOWNSCALE = "RevertAndDownscale"
    REVERT_ONLY = "RevertOnly"


class EventKind(str, enum.Enum):
    UPSCALE_KEPT = "UpscaleKept"
    UPSCALE_REVERTED_THEN_DOWNSCALE = "UpscaleRevertedThenDownscale"
    REVERT_ONLY = "RevertOnly"
    BOUNDARY_DOWNSCALE = "BoundaryDownscale"


_EVENT_FOR = {
    Decision.KEEP_UPSCALE: EventKind.UPSCALE_KEPT,
    Decision.REVERT_AND_DOWNSCALE: EventKind.UPSCALE_REVERTED_THEN_DOWNSCALE,
    Decision.REVERT_ONLY: EventKind.REVERT_ONLY,
}


def check_multiplicative_independence(
    alpha: float, beta: float, max_power: int = 16, rtol: float = 1e-9
) -> None:
    """Reject ``alpha**m == beta**n`` for ``1 <= m, n <= max_power`` (up to ``rtol`` in log space)."""
    la, lb = math.log(alpha), math.log(beta)
    for m in range(1, max_power + 1):
        for n in range(1, max_power + 1):
            if abs(m * la - n * lb) <= rtol * max(m * la, n * lb):
                raise ValueError(
                    f"alpha={alpha} and beta={beta} are multiplicatively dependent: "
                    f"alpha^{m} == beta^{n}"
                )


@dataclass(frozen=True)
class AdaLRSConfig:
    alpha: float = 3.0
    beta: float = 2.0
    lam: float = 0.99
    window_k: int = 200
    theta0: float = 0.9
    search_start_ratio: float = 0.1
    search_end_ratio: float = 0.4
    error_multiplier: float = DEFAULT_ERROR_MULTIPLIER
    backtracking: bool = True
    comparable_gap_threshold: float = 0.1

    def __post_init__(self) -> None:
        if not (self.alpha > 1 and self.beta > 1):
            raise ValueError("alpha and beta must both exceed 1")
        if self.alpha == self.beta:
            raise ValueError("alpha and beta must differ")
        check_multiplicative_independence(self.alpha, self.beta)
        if not 0 < self.lam < 1:
            raise ValueError(f"lam must lie in (0, 1), got {self.lam}")
        if not 0 < self.theta0 < 1:
            raise ValueError(f"theta0 must lie in (0, 1), got {self.theta0}")
        if self.window_k < 2:
            raise ValueError(f"window_k must be >= 2, got {self.window_k}")
        if not 0 <= self.search_start_ratio < self.search_end_ratio <= 1:
            raise ValueError("need 0 <= search_start_ratio < search_end_ratio <= 1")
        if self.error_multiplier <= 0:
            raise ValueError("error_multiplier must be positive")
        if self.comparable_gap_threshold <= 0:
            raise ValueError("comparable_gap_threshold must be positive")

    def search_bounds(self, total_steps: int) -> tuple[int, int]:
        return (
            int(round(self.search_start_ratio * total_steps)),
            int(round(self.search_end_ratio * total_steps)),
        )


def rectified_factors(cfg: AdaLRSConfig, adjustment_count: int) -> tuple[float, float]:
    """``(max(lam**n * alpha, 1), max(lam**n * beta, 1))``.

    Upscaling multiplies the LR by the first value, downscaling divides by the second.
    """
    if adjustment_count < 0:
        raise ValueError("adjustment_count must be non-negative")
    decay = cfg.lam**adjustment_count
    return max(decay * cfg.alpha, 1.0), max(decay * cfg.beta, 1.0)


def ramp_multiplier(scale: float, alpha_prime: float, progress: int, k: int) -> float:
    """Geometric interpolation from ``scale`` (progress 0) to ``scale * alpha_prime`` (progress k)."""
    if not 0 <= progress <= k:
        raise ValueError(f"ramp progress {progress} outside [0, {k}]")
    if progress == k:
        return scale * alpha_prime
    return scale * alpha_prime ** (progress / k)


def _closest_index(means: np.ndarray, target: float, gap_threshold: float) -> int | None:
    gaps = np.abs(means - target)
    best = float(gaps.min())
    tied = np.flatnonzero(gaps <= best + _TIE_RTOL * max(best, abs(target), 1e-300))
    idx = int(tied[-1])
    rel_gap = best / abs(target) if target != 0 else (0.0 if best == 0 else math.inf)
    if rel_gap > gap_threshold:
        return None
    return idx


def find_reference_window(
    history: Sequence[LossWindow],
    new_window: LossWindow,
    gap_threshold: float = 0.1,
) -> LossWindow | None:
    """Historical window whose mean loss is closest to ``new_window``'s.

    Ties go to the most recent candidate. Returns ``None`` when even the
    closest mean is further than ``gap_threshold`` (relative to the new mean).
    """
    if not history:
        raise ValueError("no history to search")
    means = np.array([window_mean(w) for w in history])
    idx = _closest_index(means, window_mean(new_window), gap_threshold)
    return None if idx is None else history[idx]


def decide_after_validation(
    v_new: float,
    v_ref: float,
    e: float,
    reference_found: bool,
    new_mean: float,
    history_extremes: tuple[float, float],
) -> Decision:
    if e < 0:
        raise ValueError(f"estimation error bound must be non-negative, got {e}")
    if reference_found:
        if v_new > v_ref + 2 * e:
            return Decision.KEEP_UPSCALE
        if v_new < v_ref - 2 * e:
            return Decision.REVERT_AND_DOWNSCALE
        return Decision.REVERT_ONLY
    lo, hi = history_extremes
    if new_mean < lo:
        return Decision.KEEP_UPSCALE
    if new_mean > hi:
        return Decision.REVERT_AND_DOWNSCALE
    return Decision.REVERT_ONLY


@dataclass(frozen=True)
class AdjustmentEvent:
    step: int
    kind: EventKind
    old_scale: float
    new_scale: float
    v_before: float
    v_after: float | None = None
    # < 1 only when the trial ramp was stopped early
    ramp_fraction: float = 1.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "step": self.step,
            "kind": self.kind.value,
            "old_scale": self.old_scale,
            "new_scale": self.new_scale,
            "v_before": self.v_before,
            "v_after": self.v_after,
            "ramp_fraction": self.ramp_fraction,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AdjustmentEvent":
        return cls(**{**d, "kind": EventKind(d["kind"])})


class ActionKind(str, enum.Enum):
    CONTINUE = "Continue"
    BEGIN_TRIAL_UPSCALE = "BeginTrialUpscale"
    BOUNDARY_DOWNSCALE = "BoundaryDownscale"
    TRIAL_DECIDED = "TrialDecided"


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    take_checkpoint: bool = False
    restore: Any = None
    event: AdjustmentEvent | None = None


CONTINUE = Action(ActionKind.CONTINUE)


@dataclass
class ControllerState:
    phase: Phase = Phase.MONITORING
    scale: float = 1.0
    adjustment_count: int = 0
    theta: float = 0.9
    history: list[tuple[LossWindow, SlopeEstimate]] = field(default_factory=list)
    checkpoint_handle: Any = None
    ramp_progress: int = 0
    max_history_loss: float = -math.inf
    # open monitoring window, then trial bookkeeping
    pending_steps: list[int] = field(default_factory=list)
    pending_losses: list[float] = field(default_factory=list)
    trial_factor: float = 1.0
    trial_scale: float = 1.0
    trial_v_trigger: float = math.nan


class AdaLRSController:
    def __init__(self, cfg: AdaLRSConfig, total_steps: int, initial_scale: float = 1.0):
        self.cfg = cfg
        self.total_steps = total_steps
        self.t_start, self.t_end = cfg.search_bounds(total_steps)
        self.state = ControllerState(scale=initial_scale, theta=cfg.theta0)
        self.events: list[AdjustmentEvent] = []
        self.fit: Callable[[LossWindow], SlopeEstimate] = functools.partial(
            fit_descent_velocity, error_multiplier=cfg.error_multiplier
        )

    @property
    def multiplier(self) -> float:
        """Factor to apply to the base LR on the next training step."""
        s = self.state
        if s.phase is Phase.UPSCALE_RAMP:
            return ramp_multiplier(s.scale, s.trial_factor, s.ramp_progress + 1, self.cfg.window_k)
        if s.phase is Phase.VALIDATING:
            return s.trial_scale
        return s.scale

    def effective_lr(self, base_lr: float) -> float:
        return base_lr * self.multiplier

    def attach_checkpoint(self, handle: Any) -> None:
        if self.state.phase is Phase.MONITORING:
            raise RuntimeError("checkpoints are only held during a trial")
        self.state.checkpoint_handle = handle

    def observe(self, step: int, loss: float) -> Action:
        if not math.isfinite(loss):
            raise ValueError(f"non-finite loss {loss!r} at step {step}")
        phase = self.state.phase
        if phase is Phase.MONITORING:
            return self._monitor(step, loss)
        if phase is Phase.UPSCALE_RAMP:
            return self._ramp(step, loss)
        return self._validate(step, loss)

    def abort_trial(self, step: int) -> Action:
        """Training diverged mid-trial: treat it as a failed upscale and roll back."""
        s = self.state
        if s.phase is Phase.MONITORING:
            raise RuntimeError("no trial in progress")
        if s.checkpoint_handle is None:
            raise RuntimeError("cannot abort a trial without a checkpoint")
        log.info("step %d: trial diverged, reverting and downscaling", step)
        return self._finish(step, Decision.REVERT_AND_DOWNSCALE, self._v_trigger(), None)

    # -- phases ---------------------------------------------------------

    def _monitor(self, step: int, loss: float) -> Action:
        s, k = self.state, self.cfg.window_k
        if not self.t_start <= step < self.t_end:
            return CONTINUE
        s.pending_steps.append(step)
        s.pending_losses.append(loss)
        if len(s.pending_losses) < k:
            return CONTINUE

        window = LossWindow(np.array(s.pending_steps), np.array(s.pending_losses))
        s.pending_steps, s.pending_losses = [], []
        s.history.append((window, self.fit(window)))
        s.max_history_loss = max(s.max_history_loss, float(window.losses.max()))
        if len(s.history) < 2:
            return CONTINUE

        v_t = s.history[-1][1].v
        v_prev = s.history[-2][1].v
        # a trial must be decided before the search window closes
        trial_fits = step + 2 * k < self.t_end
        if trial_fits and v_t < v_prev * s.theta:
            s.phase = Phase.UPSCALE_RAMP
            s.ramp_progress = 0
            s.trial_factor = rectified_factors(self.cfg, s.adjustment_count)[0]
            s.trial_v_trigger = v_t
            log.debug("step %d: velocity %.3g < %.3g * %.4f, trial upscale x%.4g",
                      step, v_t, v_prev, s.theta, s.trial_factor)
            return Action(ActionKind.BEGIN_TRIAL_UPSCALE, take_checkpoint=self.cfg.backtracking)
        if v_t < 0 and v_prev < 0:
            beta_inv = rectified_factors(self.cfg, s.adjustment_count)[1]
            event = AdjustmentEvent(
                step, EventKind.BOUNDARY_DOWNSCALE, s.scale, s.scale / beta_inv, v_t
            )
            log.info("step %d: loss rising for two windows, scale %.4g -> %.4g",
                     step, event.old_scale, event.new_scale)
            s.scale = event.new_scale
            self._reset_after_adjustment(event)
            return Action(ActionKind.BOUNDARY_DOWNSCALE, event=event)
        s.theta = (s.theta + 1.0) / 2.0
        return CONTINUE

    def _ramp(self, step: int, loss: float) -> Action:
        s, k = self.state, self.cfg.window_k
        s.ramp_progress += 1
        early = loss > s.max_history_loss
        if early or s.ramp_progress == k:
            if early:
                log.debug("step %d: ramp stopped early at %d/%d", step, s.ramp_progress, k)
            s.trial_scale = ramp_multiplier(s.scale, s.trial_factor, s.ramp_progress, k)
            s.phase = Phase.VALIDATING
        return CONTINUE

    def _validate(self, step: int, loss: float) -> Action:
        s, cfg = self.state, self.cfg
        s.pending_steps.append(step)
        s.pending_losses.append(loss)
        if len(s.pending_losses) < cfg.window_k:
            return CONTINUE

        new_window = LossWindow(np.array(s.pending_steps), np.array(s.pending_losses))
        est_new = self.fit(new_window)
        new_mean = window_mean(new_window)

        hist_steps = np.concatenate([w.steps for w, _ in s.history])
        hist_losses = np.concatenate([w.losses for w, _ in s.history])
        k = cfg.window_k
        means = np.lib.stride_tricks.sliding_window_view(hist_losses, k).mean(axis=1)
        idx = _closest_index(means, new_mean, cfg.comparable_gap_threshold)

        if idx is not None:
            ref = LossWindow(hist_steps[idx : idx + k], hist_losses[idx : idx + k])
            est_ref = self.fit(ref)
            v_ref = est_ref.v
            e = max(est_new.e_bound, est_ref.e_bound)
        else:
            v_ref, e = self._v_trigger(), 0.0
        decision = decide_after_validation(
            est_new.v, v_ref, e, idx is not None, new_mean, (float(means.min()), float(means.max()))
        )
        return self._finish(step, decision, v_ref, est_new.v)

    # -- bookkeeping ----------------------------------------------------

    def _v_trigger(self) -> float:
        return self.state.trial_v_trigger

    def _finish(self, step: int, decision: Decision, v_before: float, v_after: float | None) -> Action:
        s, cfg = self.state, self.cfg
        beta_inv = rectified_factors(cfg, s.adjustment_count)[1]
        old = s.scale
        fraction = 1.0
        if s.phase is Phase.VALIDATING and s.trial_factor > 1.0:
            fraction = math.log(s.trial_scale / old) / math.log(s.trial_factor)
        if decision is Decision.KEEP_UPSCALE:
            new = s.trial_scale
        elif decision is Decision.REVERT_AND_DOWNSCALE:
            new = old / beta_inv
        else:
            new = old
        event = AdjustmentEvent(step, _EVENT_FOR[decision], old, new, v_before, v_after,
                                ramp_fraction=min(fraction, 1.0))
        restore = None
        if decision is not Decision.KEEP_UPSCALE and cfg.backtracking:
            restore = s.checkpoint_handle
        log.info("step %d: %s, scale %.4g -> %.4g (v_ref=%.3g, v_new=%s)",
                 step, decision.value, old, new, v_before, v_after)
        s.scale = new
        self._reset_after_adjustment(event)
        return Action(ActionKind.TRIAL_DECIDED, restore=restore, event=event)

    def _reset_after_adjustment(self, event: AdjustmentEvent) -> None:
        s = self.state
        self.events.append(event)
        s.adjustment_count += 1
        s.history = []
        s.theta = self.cfg.theta0
        s.max_history_loss = -math.inf
        s.pending_steps, s.pending_losses = [], []
        s.checkpoint_handle = None
        s.ramp_progress = 0
        s.phase = Phase.MONITORING
