"""Seeded AdaLRS runs on the noisy quadratic from a small and a large start.

Prints, per seed, the final effective LR against its convergence band, the
worst contraction ratio over the adjustment events, and how early AdaLRS
reaches the constant-LR baseline's final loss.

    python scripts/convergence.py --seeds 10 --out runs/convergence
"""

import argparse
from pathlib import Path

from adalrs.config import OracleConfig, RunConfig
from adalrs.controller import AdaLRSConfig
from adalrs.harness import compare_runs, run_experiment
from adalrs.sched import ScheduleConfig

ORACLE = dict(curvature=100.0, dim=256, noise_std=0.1, condition_number=1e4, init_scale=10.0)


def config(eta0: float, seed: int, steps: int, adalrs: bool, out: Path | None) -> RunConfig:
    return RunConfig(
        scheduler=ScheduleConfig("constant", base_lr=eta0, total_steps=steps),
        adalrs=AdaLRSConfig() if adalrs else None,
        oracle=OracleConfig(seed=seed, **ORACLE),
        output_dir=out,
    )


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--eta0", type=float, nargs="+", default=[1e-4, 1.8e-2])
    ap.add_argument("--steps", type=int, default=40_000)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    for eta0 in args.eta0:
        print(f"\neta0 = {eta0:g}")
        print(f"{'seed':>4} {'final lr':>10} {'band':>22} {'in':>3} {'gamma':>7} {'events':>6} {'crossing':>9}")
        inside = 0
        for seed in range(args.seeds):
            out = args.out / f"eta{eta0:g}" / f"seed{seed}" if args.out else None
            ada = run_experiment(config(eta0, seed, args.steps, True, out))
            base = run_experiment(config(eta0, seed, args.steps, False, out and out / "baseline"))
            v = ada.verdict
            cmp = compare_runs(ada, base)
            gamma = "-" if v.gamma_estimate is None else f"{v.gamma_estimate:.4f}"
            cross = "never" if cmp.crossing_fraction is None else f"{cmp.crossing_fraction:.3f}"
            inside += v.inside
            print(f"{seed:>4} {v.final_scale_lr:>10.5f} ({v.band_lo:.5f}, {v.band_hi:.5f}) "
                  f"{'y' if v.inside else 'n':>3} {gamma:>7} {len(ada.events):>6} {cross:>9}")
        print(f"inside band: {inside}/{args.seeds}")


if __name__ == "__main__":
    main()
