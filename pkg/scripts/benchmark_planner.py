"""Planner throughput at increasing campaign sizes.

Times ranking plus prefix selection over a doubling series of campaigns and
prints per-size wall times with the observed doubling exponents (log2 of the
time ratio; sort-dominated scaling keeps these near 1).
"""

import argparse
import math
import time

from adbid.oracle import rank_items, select_prefix
from adbid.traffic import TrafficConfig, generate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mode", choices=("slot", "upgrade"), default="upgrade")
    ap.add_argument("--ios-mean", type=float, default=800.0, help="smallest size")
    ap.add_argument("--doublings", type=int, default=4)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=6)
    args = ap.parse_args()

    times = []
    for step_ix in range(args.doublings + 1):
        lam = args.ios_mean * 2**step_ix
        campaign = generate(TrafficConfig(ios_mean=lam, seed=args.seed))
        n_slots = campaign.total_ios * campaign.slot_count
        best = math.inf
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            ranking = rank_items(campaign, args.mode)
            select_prefix(ranking, budget=0.05 * lam, target_cpa=8.0)
            best = min(best, time.perf_counter() - t0)
        times.append(best)
        rate = n_slots / best
        print(f"lam={lam:>8.0f}  slots={n_slots:>9d}  best={best:.3f}s  "
              f"({rate / 1e6:.2f}M slots/s)")
    for a, b in zip(times, times[1:]):
        print(f"doubling ratio {b / a:.2f} -> exponent {math.log2(b / a):.2f}")


if __name__ == "__main__":
    main()
