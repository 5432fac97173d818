"""Experiment runner: wires a base schedule, an oracle and (optionally) AdaLRS."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .config import RunConfig
from .controller import AdaLRSController, AdjustmentEvent, Phase
from .oracle import DivergedError, NoOptimumError, OracleFactory, QuadraticOracle, run_constant
from .sched import base_lr_at
from .slope import LossWindow, fit_descent_velocity
from .theory import ConvergenceVerdict, contraction_radius, convergence_band, measure_gamma

log = logging.getLogger(__name__)

TRACE_HEADER = ("step", "base_lr", "scale", "effective_lr", "loss")


@dataclass
class Trace:
    step: list[int] = field(default_factory=list)
    base_lr: list[float] = field(default_factory=list)
    scale: list[float] = field(default_factory=list)
    effective_lr: list[float] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)

    def append(self, step: int, base_lr: float, scale: float, lr: float, loss: float) -> None:
        self.step.append(step)
        self.base_lr.append(base_lr)
        self.scale.append(scale)
        self.effective_lr.append(lr)
        self.loss.append(loss)

    def __len__(self) -> int:
        return len(self.step)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Trace):
            return NotImplemented
        return all(
            [repr(x) for x in getattr(self, col)] == [repr(x) for x in getattr(other, col)]
            for col in TRACE_HEADER
        )


def write_trace_csv(trace: Trace, path: str | Path) -> None:
    # repr() is the shortest string that round-trips a float exactly
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(TRACE_HEADER) + "\n")
        for row in zip(trace.step, trace.base_lr, trace.scale, trace.effective_lr, trace.loss):
            fh.write(f"{row[0]},{row[1]!r},{row[2]!r},{row[3]!r},{row[4]!r}\n")


def read_trace_csv(path: str | Path) -> Trace:
    trace = Trace()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != TRACE_HEADER:
            raise ValueError(f"unexpected trace header {header}")
        for row in reader:
            trace.append(int(row[0]), *(float(x) for x in row[1:]))
    return trace


@dataclass
class RunReport:
    trace: Trace
    events: list[AdjustmentEvent]
    final_loss: float
    final_window: int
    diverged: bool
    config: dict[str, Any]
    verdict: ConvergenceVerdict | None = None
    final_scale: float = 1.0
    adjustment_count: int = 0
    wall_time: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "final_loss": self.final_loss,
            "final_window": self.final_window,
            "diverged": self.diverged,
            "steps": len(self.trace),
            "final_scale": self.final_scale,
            "adjustment_count": self.adjustment_count,
            "n_events": len(self.events),
            "verdict": None if self.verdict is None else vars(self.verdict),
            "wall_time": self.wall_time,
            "config": self.config,
        }

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_trace_csv(self.trace, out / "trace.csv")
        (out / "events.json").write_text(
            json.dumps([e.to_dict() for e in self.events], indent=2) + "\n", encoding="utf-8"
        )
        (out / "report.json").write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, out_dir: str | Path) -> "RunReport":
        out = Path(out_dir)
        meta = json.loads((out / "report.json").read_text(encoding="utf-8"))
        events = [AdjustmentEvent.from_dict(d) for d in json.loads((out / "events.json").read_text())]
        verdict = meta.get("verdict")
        return cls(
            trace=read_trace_csv(out / "trace.csv"),
            events=events,
            final_loss=meta["final_loss"],
            final_window=meta["final_window"],
            diverged=meta["diverged"],
            config=meta["config"],
            verdict=None if verdict is None else ConvergenceVerdict(**verdict),
            final_scale=meta.get("final_scale", 1.0),
            adjustment_count=meta.get("adjustment_count", 0),
            wall_time=meta.get("wall_time", 0.0),
        )


def run_experiment(cfg: RunConfig, write: bool = True) -> RunReport:
    """Train for ``total_steps`` steps, consulting AdaLRS (if configured) after each one.

    Divergence ends the run with ``diverged=True`` unless it happens inside a
    trial upscale with backtracking on, in which case the trial is rolled back.
    """
    t0 = time.perf_counter()
    sched = cfg.scheduler
    oracle = cfg.oracle.build()
    ctl = AdaLRSController(cfg.adalrs, sched.total_steps) if cfg.adalrs else None
    trace = Trace()
    diverged = False

    for step in range(sched.total_steps):
        base = base_lr_at(sched, step)
        mult = ctl.multiplier if ctl else 1.0
        lr = base * mult
        try:
            loss = oracle.step(lr)
        except DivergedError as exc:
            trace.append(step, base, mult, lr, exc.loss)
            s = ctl.state if ctl else None
            if s is not None and s.phase is not Phase.MONITORING and s.checkpoint_handle is not None:
                action = ctl.abort_trial(step)
                oracle.restore(action.restore)
                continue
            log.warning("run diverged at step %d (lr=%g)", step, lr)
            diverged = True
            break
        trace.append(step, base, mult, lr, loss)
        if ctl is None:
            continue
        action = ctl.observe(step, loss)
        if action.take_checkpoint:
            ctl.attach_checkpoint(oracle.snapshot())
        if action.restore is not None:
            oracle.restore(action.restore)

    window = min(cfg.final_window, len(trace)) or 1
    final_loss = float(np.mean(trace.loss[-window:])) if len(trace) else math.nan
    events = list(ctl.events) if ctl else []
    verdict = None
    if ctl is not None and isinstance(oracle, QuadraticOracle):
        verdict = _quadratic_verdict(ctl, cfg, oracle.optimal_lr)

    report = RunReport(
        trace=trace,
        events=events,
        final_loss=final_loss,
        final_window=window,
        diverged=diverged,
        config=cfg.to_dict(),
        verdict=verdict,
        final_scale=ctl.state.scale if ctl else 1.0,
        adjustment_count=ctl.state.adjustment_count if ctl else 0,
        wall_time=time.perf_counter() - t0,
    )
    if write and cfg.output_dir is not None:
        report.write(cfg.output_dir)
    return report


def _quadratic_verdict(ctl: AdaLRSController, cfg: RunConfig, eta_star: float) -> ConvergenceVerdict:
    ada = cfg.adalrs
    assert ada is not None
    try:
        gamma = measure_gamma(
            ctl.events,
            eta_star,
            lambda t: base_lr_at(cfg.scheduler, t),
            e=contraction_radius(eta_star, ada.alpha, ada.beta),
        )
    except ValueError:
        gamma = None
    # scale times peak base LR: the LR the search actually settled on
    return convergence_band(ctl.state, ada, eta_star, 0.0, cfg.scheduler.base_lr, gamma)


def trailing_means(losses: Sequence[float], window: int) -> np.ndarray:
    """Entry ``i`` is the mean of ``losses[i - window + 1 : i + 1]`` (NaN for ``i < window - 1``)."""
    x = np.asarray(losses, dtype=np.float64)
    out = np.full(x.size, np.nan)
    if x.size >= window:
        # each window summed on its own; a running cumsum loses digits once the loss has dropped
        out[window - 1 :] = np.lib.stride_tricks.sliding_window_view(x, window).mean(axis=1)
    return out


@dataclass(frozen=True)
class Comparison:
    final_loss_delta: float
    crossing_step: int | None
    crossing_fraction: float | None


def compare_runs(a: RunReport, b: RunReport) -> Comparison:
    """How much earlier run ``a`` reaches run ``b``'s final loss.

    The crossing step is the first step at which ``a``'s trailing mean (over
    ``b``'s final window) is at or below ``b.final_loss``.
    """
    if a.config.get("oracle") != b.config.get("oracle"):
        raise ValueError("reports come from different oracle configurations or seeds")
    means = trailing_means(a.trace.loss, b.final_window)
    # slack covers summation-order rounding between the two means
    hits = np.flatnonzero(means <= b.final_loss + 1e-12 * abs(b.final_loss))
    crossing = int(a.trace.step[hits[0]]) if hits.size else None
    total = a.config["scheduler"]["total_steps"]
    return Comparison(
        final_loss_delta=a.final_loss - b.final_loss,
        crossing_step=crossing,
        crossing_fraction=None if crossing is None else crossing / total,
    )


# -- convexity sweeps -------------------------------------------------------


@dataclass
class SweepResult:
    lrs: list[float]
    snapshots: list[int]
    # snapshot step -> per-LR loss (None for diverged runs)
    snapshot_losses: dict[int, list[float | None]]
    final_losses: list[float | None]
    level_edges: np.ndarray
    # velocity[b][i]: mean descent velocity of LR i over windows whose mean loss lies in bin b
    velocity: list[list[float | None]]

    def velocity_argmax_by_level(self, min_runs: int = 3) -> dict[int, int]:
        """Per loss bin reached by at least ``min_runs`` LRs, the grid index of the fastest LR."""
        out = {}
        for b, row in enumerate(self.velocity):
            present = [(v, i) for i, v in enumerate(row) if v is not None]
            if len(present) >= min_runs:
                out[b] = max(present)[1]
        return out

    def final_argmin(self) -> int:
        present = [(f, i) for i, f in enumerate(self.final_losses) if f is not None]
        if not present:
            raise NoOptimumError("every sweep run diverged")
        return min(present)[1]


def sign_changes(values: Sequence[float | None]) -> int:
    """Sign changes in the discrete differences of the non-absent values."""
    xs = [v for v in values if v is not None]
    diffs = np.sign(np.diff(xs))
    diffs = diffs[diffs != 0]
    return int(np.count_nonzero(diffs[1:] != diffs[:-1]))


def is_unimodal(values: Sequence[float | None], mode: str = "min") -> bool:
    """At most one turn, and (if there is one) it is a valley for ``min`` / a peak for ``max``."""
    xs = [v for v in values if v is not None]
    d = np.sign(np.diff(xs))
    d = d[d != 0]
    if sign_changes(xs) == 0:
        return True
    if sign_changes(xs) > 1:
        return False
    return bool(d[0] < 0) if mode == "min" else bool(d[0] > 0)


def convexity_sweep(
    factory: OracleFactory,
    lr_grid: Sequence[float],
    steps: int,
    snapshots: Sequence[int] = (),
    velocity_window: int = 100,
    n_levels: int = 8,
    min_exponential_points: int = 5,
) -> SweepResult:
    """Constant-LR runs over ``lr_grid``: losses at snapshot steps, and velocities binned by loss level.

    A run that diverges is absent from every table.
    """
    if len(lr_grid) < min_exponential_points:
        raise ValueError(f"need at least {min_exponential_points} learning rates")
    n_steps = max([steps, *(s + 1 for s in snapshots)])
    snap: dict[int, list[float | None]] = {s: [] for s in snapshots}
    finals: list[float | None] = []
    windows: list[list[tuple[float, float]] | None] = []
    for lr in lr_grid:
        losses, diverged = run_constant(factory(), lr, n_steps)
        if diverged:
            finals.append(None)
            windows.append(None)
            for s in snapshots:
                snap[s].append(None)
            continue
        for s in snapshots:
            snap[s].append(float(losses[s]))
        finals.append(float(np.mean(losses[steps - velocity_window : steps])))
        run_windows = []
        for start in range(0, steps - velocity_window + 1, velocity_window):
            w = LossWindow.from_losses(losses[start : start + velocity_window], start)
            run_windows.append((float(w.losses.mean()), fit_descent_velocity(w).v))
        windows.append(run_windows)

    all_means = [m for ws in windows if ws for m, _ in ws if m > 0]
    if all_means:
        edges = np.geomspace(min(all_means), max(all_means) * (1 + 1e-12), n_levels + 1)
    else:
        edges = np.array([])
    velocity: list[list[float | None]] = []
    for b in range(len(edges) - 1):
        row: list[float | None] = []
        for ws in windows:
            vs = [v for m, v in ws or [] if edges[b] <= m < edges[b + 1]]
            row.append(float(np.mean(vs)) if vs else None)
        velocity.append(row)
    return SweepResult(list(lr_grid), list(snapshots), snap, finals, edges, velocity)


def write_sweep(result: SweepResult, out_dir: str | Path) -> None:
    """gnuplot-friendly whitespace columns; absent cells are ``NaN``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def cell(x: float | None) -> str:
        return "NaN" if x is None else repr(x)

    with open(out / "loss_vs_lr.dat", "w", encoding="utf-8") as fh:
        fh.write("# lr final " + " ".join(f"step{s}" for s in result.snapshots) + "\n")
        for i, lr in enumerate(result.lrs):
            cols = [repr(lr), cell(result.final_losses[i])]
            cols += [cell(result.snapshot_losses[s][i]) for s in result.snapshots]
            fh.write(" ".join(cols) + "\n")
    with open(out / "velocity_vs_lr.dat", "w", encoding="utf-8") as fh:
        levels = [math.sqrt(lo * hi) for lo, hi in zip(result.level_edges[:-1], result.level_edges[1:])]
        fh.write("# lr " + " ".join(f"level{lv:.4g}" for lv in levels) + "\n")
        for i, lr in enumerate(result.lrs):
            fh.write(" ".join([repr(lr)] + [cell(row[i]) for row in result.velocity]) + "\n")
