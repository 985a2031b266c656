#!/usr/bin/env python3
"""Attention-pair counts per lifting mode on cubic token grids, plus the Flat3D/PlaneCycle ratio."""

import argparse

from planecycle.complexity import attention_cost
from planecycle.lifting import LiftMode


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="2,4,8,16,32")
    ap.add_argument("--depth", type=int, default=12)
    ap.add_argument("--g", type=int, default=5)
    args = ap.parse_args()

    modes = [LiftMode.SLICE2D, LiftMode.FLAT3D, LiftMode.PCG]
    print(f"{'n':>4} " + " ".join(f"{m.value:>16}" for m in modes) + f" {'3d/pc':>8}")
    for n in (int(s) for s in args.sizes.split(",")):
        totals = {m: attention_cost(m, (n, n, n), args.g, args.depth).total_pairs for m in modes}
        ratio = totals[LiftMode.FLAT3D] / totals[LiftMode.PCG]
        print(f"{n:>4} " + " ".join(f"{totals[m]:>16,}" for m in modes) + f" {ratio:>8.3f}")


if __name__ == "__main__":
    main()
