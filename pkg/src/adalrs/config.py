"""Flat ``key = value`` run configuration.

One setting per line, dotted section keys, ``#`` starts a comment::

    scheduler.kind = constant
    scheduler.base_lr = 1e-4
    scheduler.total_steps = 40000
    adalrs.alpha = 3
    oracle.kind = quadratic
    oracle.curvature = 100

Any ``adalrs.*`` key switches AdaLRS on (``adalrs.enabled = false`` turns it
back off); with none present the run is a baseline.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .controller import AdaLRSConfig
from .oracle import MLPOracle, Oracle, QuadraticOracle
from .sched import ScheduleConfig, ScheduleKind


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class OracleConfig:
    kind: str = "quadratic"
    seed: int = 0
    optimizer: str = "sgd"
    momentum_coeff: float = 0.9
    # quadratic
    curvature: float = 100.0
    dim: int = 1
    noise_std: float = 0.0
    condition_number: float = 1.0
    init_scale: float = 1.0
    # mlp
    mlp_sizes: tuple[int, ...] = (8, 16, 1)
    n_samples: int = 512
    batch_size: int = 64

    def __post_init__(self) -> None:
        if self.kind not in ("quadratic", "mlp"):
            raise ConfigError("oracle.kind", f"unknown oracle kind {self.kind!r}")
        if self.optimizer not in ("sgd", "momentum"):
            raise ConfigError("oracle.optimizer", f"unknown optimizer {self.optimizer!r}")

    def build(self, seed: int | None = None) -> Oracle:
        seed = self.seed if seed is None else seed
        if self.kind == "quadratic":
            return QuadraticOracle(
                curvature=self.curvature,
                dim=self.dim,
                noise_std=self.noise_std,
                seed=seed,
                condition_number=self.condition_number,
                init_scale=self.init_scale,
                optimizer=self.optimizer,
                momentum_coeff=self.momentum_coeff,
            )
        return MLPOracle(
            sizes=self.mlp_sizes,
            n_samples=self.n_samples,
            batch_size=self.batch_size,
            seed=seed,
            optimizer=self.optimizer,
            momentum_coeff=self.momentum_coeff,
        )

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["mlp_sizes"] = list(self.mlp_sizes)
        return d


@dataclass(frozen=True)
class RunConfig:
    scheduler: ScheduleConfig = field(default_factory=ScheduleConfig)
    adalrs: AdaLRSConfig | None = None
    oracle: OracleConfig = field(default_factory=OracleConfig)
    output_dir: Path | None = None
    final_window: int = 200

    @property
    def seed(self) -> int:
        return self.oracle.seed

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(self, oracle=dataclasses.replace(self.oracle, seed=seed))

    def to_dict(self) -> dict[str, Any]:
        sched = dataclasses.asdict(self.scheduler)
        sched["kind"] = self.scheduler.kind.value
        return {
            "scheduler": sched,
            "adalrs": None if self.adalrs is None else dataclasses.asdict(self.adalrs),
            "oracle": self.oracle.to_dict(),
            "final_window": self.final_window,
        }


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _sizes(s: str) -> tuple[int, ...]:
    return tuple(int(p) for p in s.replace("-", ",").replace("x", ",").split(",") if p.strip())


# config key -> (section, field name, parser)
_KEYS: dict[str, tuple[str, str, Any]] = {
    "scheduler.kind": ("scheduler", "kind", lambda s: ScheduleKind(s.strip().lower())),
    "scheduler.base_lr": ("scheduler", "base_lr", float),
    "scheduler.total_steps": ("scheduler", "total_steps", int),
    "scheduler.min_lr_ratio": ("scheduler", "min_lr_ratio", float),
    "scheduler.wsd_decay_fraction": ("scheduler", "wsd_decay_fraction", float),
    "adalrs.enabled": ("adalrs", "enabled", _bool),
    "adalrs.alpha": ("adalrs", "alpha", float),
    "adalrs.beta": ("adalrs", "beta", float),
    "adalrs.lambda": ("adalrs", "lam", float),
    "adalrs.window_k": ("adalrs", "window_k", int),
    "adalrs.theta0": ("adalrs", "theta0", float),
    "adalrs.search_start_ratio": ("adalrs", "search_start_ratio", float),
    "adalrs.search_end_ratio": ("adalrs", "search_end_ratio", float),
    "adalrs.error_multiplier": ("adalrs", "error_multiplier", float),
    "adalrs.backtracking": ("adalrs", "backtracking", _bool),
    "adalrs.comparable_gap_threshold": ("adalrs", "comparable_gap_threshold", float),
    "oracle.kind": ("oracle", "kind", lambda s: s.strip().lower()),
    "oracle.seed": ("oracle", "seed", int),
    "oracle.optimizer": ("oracle", "optimizer", lambda s: s.strip().lower()),
    "oracle.momentum_coeff": ("oracle", "momentum_coeff", float),
    "oracle.curvature": ("oracle", "curvature", float),
    "oracle.dim": ("oracle", "dim", int),
    "oracle.noise_std": ("oracle", "noise_std", float),
    "oracle.condition_number": ("oracle", "condition_number", float),
    "oracle.init_scale": ("oracle", "init_scale", float),
    "oracle.mlp_sizes": ("oracle", "mlp_sizes", _sizes),
    "oracle.n_samples": ("oracle", "n_samples", int),
    "oracle.batch_size": ("oracle", "batch_size", int),
    "run.output_dir": ("run", "output_dir", Path),
    "run.final_window": ("run", "final_window", int),
}


def parse_config_text(text: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        entries[key] = value
    return entries


def build_run_config(entries: Mapping[str, str]) -> RunConfig:
    sections: dict[str, dict[str, Any]] = {"scheduler": {}, "adalrs": {}, "oracle": {}, "run": {}}
    for key, raw in entries.items():
        if key not in _KEYS:
            raise ConfigError(key, "unknown configuration key")
        section, name, parse = _KEYS[key]
        try:
            sections[section][name] = parse(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(key, f"bad value {raw!r} ({exc})") from None

    def make(section: str, cls: Any, kwargs: dict[str, Any]) -> Any:
        try:
            return cls(**kwargs)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            # name the first config key whose field the validator complained about
            msg = str(exc)
            for key, (sec, name, _) in _KEYS.items():
                if sec == section and name in msg:
                    raise ConfigError(key, msg) from None
            raise ConfigError(f"{section}.*", msg) from None

    scheduler = make("scheduler", ScheduleConfig, sections["scheduler"])
    ada_kwargs = dict(sections["adalrs"])
    enabled = ada_kwargs.pop("enabled", bool(ada_kwargs))
    adalrs = make("adalrs", AdaLRSConfig, ada_kwargs) if enabled else None
    oracle = make("oracle", OracleConfig, sections["oracle"])
    return RunConfig(scheduler=scheduler, adalrs=adalrs, oracle=oracle, **sections["run"])


def load_run_config(path: str | Path, overrides: Mapping[str, str] | None = None) -> RunConfig:
    entries = parse_config_text(Path(path).read_text(encoding="utf-8"))
    entries.update(overrides or {})
    return build_run_config(entries)
