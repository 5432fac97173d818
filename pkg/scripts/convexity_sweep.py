"""Loss and descent velocity against LR for the MLP oracle.

Writes gnuplot-ready ``loss_vs_lr.dat`` and ``velocity_vs_lr.dat`` and prints
where the final loss bottoms out and where velocity peaks at each loss level.

    python scripts/convexity_sweep.py --out sweep/mlp
"""

import argparse
from pathlib import Path

from adalrs.harness import convexity_sweep, is_unimodal, write_sweep
from adalrs.oracle import MLPOracle


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--steps", type=int, default=5000)
    ap.add_argument("--snapshots", type=int, nargs="*", default=[500, 1000, 2000, 4999])
    ap.add_argument("--out", type=Path, default=Path("sweep/mlp"))
    args = ap.parse_args()

    lrs = [1e-4 * 2**i for i in range(4, 15)]
    res = convexity_sweep(lambda: MLPOracle(seed=args.seed), lrs, args.steps, args.snapshots)
    write_sweep(res, args.out)

    for lr, f in zip(lrs, res.final_losses):
        print(f"lr {lr:<8.4g} final {'diverged' if f is None else f'{f:.5g}'}")
    best = res.final_argmin()
    print(f"argmin lr {lrs[best]:g}, unimodal: {is_unimodal(res.final_losses)}")
    for b, i in res.velocity_argmax_by_level().items():
        lo, hi = res.level_edges[b], res.level_edges[b + 1]
        print(f"loss level [{lo:.3g}, {hi:.3g}): fastest lr {lrs[i]:g}")
    print(f"data written to {args.out}")


if __name__ == "__main__":
    main()
