"""Final LR reached from a small start for several (alpha, beta) pairs.

    python scripts/factor_trend.py --seeds 10
"""

import argparse

import numpy as np

from adalrs.config import OracleConfig, RunConfig
from adalrs.controller import AdaLRSConfig
from adalrs.harness import run_experiment
from adalrs.sched import ScheduleConfig

PAIRS = [(3.0, 2.0), (2.0, 1.67), (1.5, 1.43)]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--eta0", type=float, default=1e-4)
    ap.add_argument("--steps", type=int, default=40_000)
    ap.add_argument("--search-end", type=float, default=0.4)
    args = ap.parse_args()

    for alpha, beta in PAIRS:
        ada = AdaLRSConfig(alpha=alpha, beta=beta, lam=0.99, search_end_ratio=args.search_end)
        finals, kept = [], []
        for seed in range(args.seeds):
            cfg = RunConfig(
                scheduler=ScheduleConfig("constant", base_lr=args.eta0, total_steps=args.steps),
                adalrs=ada,
                oracle=OracleConfig(seed=seed, curvature=100, dim=256, noise_std=0.1,
                                    condition_number=1e4, init_scale=10),
            )
            rep = run_experiment(cfg, write=False)
            finals.append(rep.verdict.final_scale_lr)
            kept.append(sum(e.kind.value == "UpscaleKept" for e in rep.events))
        print(f"alpha {alpha:<4g} beta {beta:<5g} mean final lr {np.mean(finals):.5f} "
              f"(min {min(finals):.5f}, max {max(finals):.5f}), mean kept upscales {np.mean(kept):.1f}")


if __name__ == "__main__":
    main()
