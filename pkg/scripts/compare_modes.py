"""Expected-score comparison of the three bid synthesis modes.

Plans every campaign with each mode, scores the resulting slot holdings
analytically (no simulation noise), and reports paired sign tests of the
expected ordering upgrade >= two-slopes >= slot.
"""

import argparse
import math

import numpy as np

from adbid import oracle
from adbid.auction import resolve_bid
from adbid.evaluate import make_episodes
from adbid.exact import objective_value
from adbid.traffic import TrafficConfig, generate


def sign_test_p(wins: int, n: int) -> float:
    """One-sided exact binomial tail P[X >= wins] under p=0.5."""
    return sum(math.comb(n, i) for i in range(wins, n + 1)) / 2.0**n


def two_slopes_assignment(campaign, brief):
    sel = oracle.plan(campaign, brief, "2s")
    assign = []
    for t in range(1, campaign.horizon + 1):
        traffic = campaign.traffic(t)
        bids = oracle.bids_2s(sel, traffic, t)
        held = np.zeros(len(traffic), dtype=np.int64)
        for i in range(len(traffic)):
            won, slot_d, _ = resolve_bid(float(bids[i]), traffic.competitor_bids[i])
            held[i] = slot_d if won else 0
        assign.append(held)
    return assign


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--campaigns", type=int, default=100)
    ap.add_argument("--horizon", type=int, default=10)
    ap.add_argument("--ios-mean", type=float, default=100.0)
    ap.add_argument("--seed", type=int, default=2000)
    ap.add_argument("--brief-seed", type=int, default=7)
    args = ap.parse_args()

    camps = [
        generate(TrafficConfig(horizon=args.horizon, ios_mean=args.ios_mean, seed=args.seed + j))
        for j in range(args.campaigns)
    ]
    specs = make_episodes(camps, args.campaigns, seed=args.brief_seed)
    scores = {m: [] for m in ("upgrade", "2s", "slot")}
    for spec in specs:
        c, brief = spec.campaign, spec.brief
        for mode in ("upgrade", "slot"):
            assign = oracle.selection_to_assignment(oracle.plan(c, brief, mode), c)
            scores[mode].append(objective_value(assign, c, brief.target_cpa).score)
        scores["2s"].append(
            objective_value(two_slopes_assignment(c, brief), c, brief.target_cpa).score
        )

    arrays = {m: np.array(v) for m, v in scores.items()}
    for mode in ("upgrade", "2s", "slot"):
        print(f"{mode:>8s}: mean expected score {arrays[mode].mean():.4f}")
    for name, a, b in (("upgrade >= 2s", arrays["upgrade"], arrays["2s"]),
                       ("2s >= slot", arrays["2s"], arrays["slot"]),
                       ("upgrade >= slot", arrays["upgrade"], arrays["slot"])):
        wins = int((a >= b).sum())
        print(f"{name}: {wins}/{len(a)} campaigns, sign test p={sign_test_p(wins, len(a)):.2e}")


if __name__ == "__main__":
    main()
