"""Online learning-rate search by loss-descent-velocity comparison (AdaLRS)."""

from .config import ConfigError, OracleConfig, RunConfig, load_run_config
from .controller import (
    Action,
    ActionKind,
    AdaLRSConfig,
    AdaLRSController,
    AdjustmentEvent,
    ControllerState,
    Decision,
    EventKind,
    Phase,
    decide_after_validation,
    find_reference_window,
    ramp_multiplier,
    rectified_factors,
)
from .harness import RunReport, compare_runs, convexity_sweep, run_experiment
from .oracle import Checkpoint, DivergedError, MLPOracle, QuadraticOracle, grid_search
from .sched import ScheduleConfig, ScheduleKind, base_lr_at
from .slope import LossWindow, SlopeEstimate, fit_descent_velocity, window_mean
from .theory import convergence_band, density_approximate, measure_gamma

__version__ = "0.1.0"
