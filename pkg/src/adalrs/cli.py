"""Command-line interface.

    adalrs run --config FILE [--seed N] [--out DIR] [--set key=value ...]
    adalrs grid --config FILE --lrs 1e-3,2e-3,... --steps N
    adalrs sweep --config FILE --lrs LIST --snapshots 0,1000 [--steps N] [--out DIR]
    adalrs compare REPORT_DIR_A REPORT_DIR_B
    adalrs density --alpha 3 --beta 2 --target 2.5 --eps 0.05

Exit status: 0 on success, 1 on a configuration or input error, 2 when a run
(or every grid point) diverged. ``ADALRS_LOG`` sets verbosity (error, info, debug).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from .config import ConfigError, RunConfig, load_run_config
from .harness import RunReport, compare_runs, convexity_sweep, run_experiment, write_sweep
from .oracle import NoOptimumError, grid_search
from .theory import NotFoundError, density_approximate

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _load(args: argparse.Namespace) -> RunConfig:
    overrides = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(item, "expected key=value")
        overrides[key.strip()] = value.strip()
    if getattr(args, "seed", None) is not None:
        overrides["oracle.seed"] = str(args.seed)
    if getattr(args, "out", None) is not None:
        overrides["run.output_dir"] = args.out
    return load_run_config(args.config, overrides)


def _print(obj: object) -> None:
    print(json.dumps(obj, indent=2, default=str))


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load(args)
    if cfg.output_dir is None:
        cfg = dataclasses.replace(cfg, output_dir=Path("runs") / f"seed{cfg.seed}")
    report = run_experiment(cfg)
    summary = report.to_dict()
    summary.pop("config")
    summary["output_dir"] = str(cfg.output_dir)
    _print(summary)
    return EXIT_DIVERGED if report.diverged else EXIT_OK


def cmd_grid(args: argparse.Namespace) -> int:
    cfg = _load(args)
    try:
        res = grid_search(cfg.oracle.build, _floats(args.lrs), args.steps)
    except NoOptimumError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_DIVERGED
    _print({"best_lr": res.best_lr, "final_losses": {repr(k): v for k, v in res.final_losses.items()}})
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load(args)
    steps = args.steps or cfg.scheduler.total_steps
    res = convexity_sweep(cfg.oracle.build, _floats(args.lrs), steps, _ints(args.snapshots))
    out = Path(args.out or "sweep")
    write_sweep(res, out)
    _print(
        {
            "final_losses": res.final_losses,
            "final_argmin_lr": res.lrs[res.final_argmin()] if any(res.final_losses) else None,
            "output_dir": str(out),
        }
    )
    return EXIT_OK if any(f is not None for f in res.final_losses) else EXIT_DIVERGED


def cmd_compare(args: argparse.Namespace) -> int:
    a, b = RunReport.load(args.report_a), RunReport.load(args.report_b)
    _print(dataclasses.asdict(compare_runs(a, b)))
    return EXIT_OK


def cmd_density(args: argparse.Namespace) -> int:
    res = density_approximate(args.alpha, args.beta, args.target, args.eps, args.max_exponent)
    _print(dataclasses.asdict(res))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adalrs", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="key=value configuration file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")

    p = sub.add_parser("run", help="one training run (baseline or AdaLRS)")
    with_config(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("grid", help="constant-LR grid search pilot")
    with_config(p)
    p.add_argument("--lrs", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("sweep", help="loss / velocity vs LR convexity sweep")
    with_config(p)
    p.add_argument("--lrs", required=True)
    p.add_argument("--snapshots", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="final-loss delta and crossing step of two runs")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("density", help="approximate a ratio by alpha^m / beta^n")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--target", type=float, required=True)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--max-exponent", type=int, default=64)
    p.set_defaults(func=cmd_density)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    level = os.environ.get("ADALRS_LOG", "error").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.ERROR),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, NotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
