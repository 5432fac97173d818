"""AdaLRS with and without checkpoint rollback of failed trials.

Starts near the stability edge, where a trial upscale overshoots 2/C.

    python scripts/backtracking_ablation.py --seeds 5
"""

import argparse

from adalrs.config import OracleConfig, RunConfig
from adalrs.controller import AdaLRSConfig
from adalrs.harness import run_experiment
from adalrs.sched import ScheduleConfig


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--eta0", type=float, default=1.8e-2)
    ap.add_argument("--steps", type=int, default=40_000)
    args = ap.parse_args()

    print(f"{'backtracking':>12} {'seed':>4} {'diverged':>8} {'final loss':>11} {'final lr':>9} {'events':>6}")
    for backtracking in (True, False):
        for seed in range(args.seeds):
            cfg = RunConfig(
                scheduler=ScheduleConfig("constant", base_lr=args.eta0, total_steps=args.steps),
                adalrs=AdaLRSConfig(backtracking=backtracking),
                oracle=OracleConfig(seed=seed, curvature=100, dim=256, noise_std=0.1,
                                    condition_number=1e4, init_scale=10),
            )
            rep = run_experiment(cfg, write=False)
            print(f"{str(backtracking):>12} {seed:>4} {str(rep.diverged):>8} {rep.final_loss:>11.4g} "
                  f"{rep.verdict.final_scale_lr:>9.5f} {len(rep.events):>6}")


if __name__ == "__main__":
    main()
