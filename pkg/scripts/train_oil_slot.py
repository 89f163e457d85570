"""End-to-end imitation run: train a slot policy on synthetic campaigns, then
score it on a held-out campaign against the replanning oracle and the best
constant coefficient.

The defaults reproduce the headline experiment in about ten minutes; pass
--interactions 5000 --ios-mean 200 --horizon 16 for a quick smoke run.
"""

import argparse
import time

from adbid.evaluate import (
    OilEnv,
    OracleBidder,
    PolicyBidder,
    best_constant_alpha,
    evaluate,
    make_episodes,
)
from adbid.policy import TrainConfig, save_checkpoint, train_oil
from adbid.traffic import TrafficConfig, generate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--interactions", type=int, default=100_000)
    ap.add_argument("--horizon", type=int, default=48)
    ap.add_argument("--ios-mean", type=float, default=2000.0)
    ap.add_argument("--train-seeds", type=int, nargs="+", default=[21, 22, 23])
    ap.add_argument("--heldout-seed", type=int, default=77)
    ap.add_argument("--env-seed", type=int, default=9)
    ap.add_argument("--train-seed", type=int, default=0)
    ap.add_argument("--episodes", type=int, default=60)
    ap.add_argument("--out", help="write the trained checkpoint here (.npz)")
    args = ap.parse_args()

    def campaign(seed):
        return generate(TrafficConfig(horizon=args.horizon, ios_mean=args.ios_mean, seed=seed))

    t0 = time.perf_counter()
    env = OilEnv([campaign(s) for s in args.train_seeds], "slot", seed=args.env_seed)
    params, log = train_oil(
        env,
        TrainConfig(total_interactions=args.interactions, seed=args.train_seed),
        progress=lambda row: print(
            f"  {row['interactions']:>7d} interactions  loss {row['loss']:.5f}  lr {row['lr']:.2e}",
            flush=True,
        ),
    )
    print(f"trained in {time.perf_counter() - t0:.0f}s over {len(log.episodes)} episodes")
    if args.out:
        save_checkpoint(params, args.out)
        print(f"checkpoint written to {args.out}")

    episodes = make_episodes([campaign(args.heldout_seed)], args.episodes, seed=args.heldout_seed)
    for name, agent in (
        ("policy", PolicyBidder(params)),
        ("oracle-slot", OracleBidder("slot")),
    ):
        s = evaluate(agent, episodes).summary()
        print(f"{name:>12s}: score {s['score_mean']:.3f} +- {s['score_se']:.3f}, "
              f"spend {s['spend_frac_mean']:.3f}")
    alpha, report, _ = best_constant_alpha(episodes)
    s = report.summary()
    print(f"{'best-const':>12s}: score {s['score_mean']:.3f} +- {s['score_se']:.3f} "
          f"(alpha {alpha:.3f})")


if __name__ == "__main__":
    main()
