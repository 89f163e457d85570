"""Command line interface.

Verbs: ``gen`` (synthesize a campaign file), ``oracle`` (plan and replay a
campaign with the hindsight planner), ``train`` (imitation-train a policy),
``eval`` (score a trained policy or a baseline), ``verify`` (run the
self-check battery), ``bench`` (planner throughput).

Exit codes: 0 success, 1 usage error, 2 verification failure, 3 training
divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from .core import AdvertiserBrief
from .errors import AdbidError, TrainingDivergedError
from .evaluate import (
    ConstantAlphaBidder,
    EpisodeSpec,
    OilEnv,
    OracleBidder,
    BriefSampler,
    PolicyBidder,
    best_constant_alpha,
    efficient_spend,
    evaluate,
    input_dim_for,
    make_episodes,
)
from .oracle import MODES, gap_bound, plan, rank_items, select_prefix
from .policy import NetConfig, TrainConfig, load_checkpoint, save_checkpoint, train_oil
from .traffic import TrafficConfig, generate, load_campaign, save_campaign
from .verify import run_all

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY = 2
EXIT_DIVERGED = 3


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage problems with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got {text!r}")


def _range_pair(text: str) -> tuple[float, float]:
    vals = _floats(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected lo,hi, got {text!r}")
    return vals


def _widths(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(p) for p in text.split(",") if p)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated ints, got {text!r}")
    if not vals or min(vals) <= 0:
        raise argparse.ArgumentTypeError(f"expected positive widths, got {text!r}")
    return vals


def build_parser() -> _Parser:
    parser = _Parser(prog="adbid", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("gen", help="synthesize a campaign and write it to a file")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=int, default=48)
    p.add_argument("--exposure", type=_floats, default=(1.0, 0.8, 0.5),
                   help="comma-separated exposure probabilities, best slot first")
    p.add_argument("--ios-mean", type=float, default=2000.0)
    p.add_argument("--ios-dispersion", type=float, default=0.2)
    p.add_argument("--category", type=int, default=0)

    p = sub.add_parser("oracle", help="plan a campaign and optionally replay it")
    p.add_argument("--campaign", required=True)
    p.add_argument("--mode", choices=MODES, default="upgrade")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--budget", type=float)
    group.add_argument("--budget-frac", type=float,
                       help="budget as a fraction of the campaign's efficient spend")
    p.add_argument("--target-cpa", type=float, required=True)
    p.add_argument("--episodes", type=int, default=0,
                   help="simulated replays with replanning (0 = plan only)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--json", help="write per-episode JSONL rows here")

    p = sub.add_parser("train", help="imitation-train a bidding policy")
    p.add_argument("--variant", choices=MODES, required=True)
    p.add_argument("--campaign", required=True, nargs="+")
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--interactions", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rollout", type=int, default=128)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch", type=int, default=512)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--budget-frac", type=_range_pair, default=(0.25, 1.0))
    p.add_argument("--cpa", type=_range_pair, default=(4.0, 12.0))
    p.add_argument("--log", help="write JSONL update rows here")
    p.add_argument("--hidden", type=_widths, default=(256, 256, 256),
                   help="comma-separated hidden layer widths")

    p = sub.add_parser("eval", help="evaluate an agent over simulated episodes")
    p.add_argument("--campaign", required=True, nargs="+")
    agent = p.add_mutually_exclusive_group(required=True)
    agent.add_argument("--checkpoint", help="trained policy checkpoint")
    agent.add_argument("--oracle-mode", choices=MODES)
    agent.add_argument("--constant-alpha", type=float)
    agent.add_argument("--best-constant", action="store_true",
                       help="search a 20-point constant-coefficient grid")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--budget-frac", type=_range_pair, default=(0.25, 1.0))
    p.add_argument("--cpa", type=_range_pair, default=(4.0, 12.0))
    p.add_argument("--json", help="write per-episode JSONL rows here")

    p = sub.add_parser("verify", help="run the self-check battery")
    p.add_argument("--fast", action="store_true", help="roughly 10x smaller samples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--corrupt", action="store_true",
                   help="negative control: corrupt the ranking and expect failures")

    p = sub.add_parser("bench", help="planner throughput on synthetic campaigns")
    p.add_argument("--slots", type=int, default=1_000_000)
    p.add_argument("--doubling", action="store_true",
                   help="time n/4, n/2 and n to report scaling exponents")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _load_campaigns(paths) -> list:
    return [load_campaign(p) for p in paths]


def _write_jsonl(path: str, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def cmd_gen(args) -> int:
    config = TrafficConfig(
        horizon=args.horizon,
        exposure_probs=args.exposure,
        ios_mean=args.ios_mean,
        ios_dispersion=args.ios_dispersion,
        category=args.category,
        seed=args.seed,
    )
    campaign = generate(config)
    save_campaign(campaign, args.out)
    print(f"wrote {args.out}: {campaign.horizon} steps, {campaign.total_ios} IOs, "
          f"{campaign.slot_count} slots")
    return EXIT_OK


def cmd_oracle(args) -> int:
    campaign = load_campaign(args.campaign)
    budget = args.budget
    if budget is None:
        spend = efficient_spend(campaign, args.target_cpa)
        budget = args.budget_frac * spend
        print(f"budget {budget:.6g} ({args.budget_frac} x efficient spend {spend:.6g})")
    brief = AdvertiserBrief(budget=budget, target_cpa=args.target_cpa)
    sel = plan(campaign, brief, args.mode)
    bound = gap_bound(sel, brief.budget)
    print(f"planned: items={len(sel)} cost={sel.expected_cost:.6g} "
          f"conversions={sel.expected_conversions:.6g} score={sel.score:.6g}")
    print(f"certified gap bound: {bound:.6g}" if bound is not None
          else "certified gap bound: n/a (target CPA not strictly met)")
    if args.episodes > 0:
        agent = OracleBidder(args.mode)
        rng = np.random.default_rng(args.seed)
        specs = [
            EpisodeSpec(campaign=campaign, brief=brief,
                        seed=int(rng.integers(0, 2**31 - 1)), index=j)
            for j in range(args.episodes)
        ]
        report = evaluate(agent, specs, jobs=args.jobs)
        for line in report.format_lines():
            print(line)
        if args.json:
            _write_jsonl(args.json, (r.as_dict() for r in report.rows))
    return EXIT_OK


def cmd_train(args) -> int:
    campaigns = _load_campaigns(args.campaign)
    sampler = BriefSampler(budget_frac=args.budget_frac, cpa_range=args.cpa)
    env = OilEnv(campaigns, args.variant, sampler=sampler, seed=args.seed)
    net = NetConfig(input_dim=input_dim_for(args.variant), head=args.variant,
                    hidden=args.hidden)
    config = TrainConfig(
        total_interactions=args.interactions,
        rollout_steps=args.rollout,
        epochs=args.epochs,
        batch_size=args.batch,
        lr_start=args.lr,
        seed=args.seed,
        diverged_checkpoint=args.out + ".diverged.npz",
    )
    start = time.perf_counter()

    def progress(row):
        print(f"interactions={row['interactions']} loss={row['loss']:.6g} "
              f"lr={row['lr']:.3g} buffer={row['buffer']}")

    try:
        params, log = train_oil(env, config, net_config=net, progress=progress)
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    save_checkpoint(params, args.out)
    elapsed = time.perf_counter() - start
    scores = [e["score"] for e in log.episodes]
    tail = float(np.mean(scores[-20:])) if scores else float("nan")
    print(f"saved {args.out} after {config.total_interactions} interactions "
          f"({elapsed:.1f}s); episodes={len(scores)} tail score={tail:.4f}")
    if args.log:
        _write_jsonl(args.log, log.updates)
    return EXIT_OK


def cmd_eval(args) -> int:
    campaigns = _load_campaigns(args.campaign)
    episodes = make_episodes(
        campaigns, args.episodes, seed=args.seed,
        budget_frac=args.budget_frac, cpa_range=args.cpa,
    )
    if args.best_constant:
        alpha, report, table = best_constant_alpha(episodes, jobs=args.jobs)
        print(f"best constant coefficient: {alpha:.6g}")
        for a, mean in table:
            print(f"  alpha={a:.6g} score={mean:.4f}")
    else:
        if args.checkpoint:
            params, _ = load_checkpoint(args.checkpoint)
            agent = PolicyBidder(params)
        elif args.oracle_mode:
            agent = OracleBidder(args.oracle_mode)
        else:
            agent = ConstantAlphaBidder(args.constant_alpha)
        report = evaluate(agent, episodes, jobs=args.jobs)
    for line in report.format_lines():
        print(line)
    if args.json:
        _write_jsonl(args.json, (r.as_dict() for r in report.rows))
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_all(fast=args.fast, seed=args.seed, corrupt=args.corrupt, jobs=args.jobs)
    for result in results:
        print(result.line())
    failed = sum(1 for r in results if not r.passed)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_VERIFY if failed else EXIT_OK


def _bench_once(n_slots: int, seed: int) -> dict:
    depth = 3
    horizon = 8
    per_step = max(1, n_slots // (depth * horizon))
    config = TrafficConfig(
        horizon=horizon, exposure_probs=(1.0, 0.8, 0.5),
        ios_mean=float(per_step), ios_dispersion=0.0, seed=seed,
    )
    campaign = generate(config)
    slots = campaign.total_ios * depth
    start = time.perf_counter()
    ranking = rank_items(campaign, "upgrade")
    t_rank = time.perf_counter() - start
    spend = float(ranking.delta_cost.sum())
    start = time.perf_counter()
    sel = select_prefix(ranking, 0.3 * spend, 8.0)
    t_select = time.perf_counter() - start
    return {"slots": slots, "rank_s": t_rank, "select_s": t_select,
            "total_s": t_rank + t_select, "selected": len(sel)}


def cmd_bench(args) -> int:
    sizes = [args.slots // 4, args.slots // 2, args.slots] if args.doubling else [args.slots]
    rows = [_bench_once(n, args.seed) for n in sizes if n > 0]
    for row in rows:
        print(f"slots={row['slots']} rank={row['rank_s']:.3f}s "
              f"select={row['select_s']:.3f}s total={row['total_s']:.3f}s "
              f"selected={row['selected']}")
    if args.doubling and len(rows) >= 2:
        for a, b in zip(rows, rows[1:]):
            if a["total_s"] > 0 and b["slots"] > a["slots"]:
                exp = np.log(b["total_s"] / a["total_s"]) / np.log(b["slots"] / a["slots"])
                print(f"scaling exponent {a['slots']} -> {b['slots']}: {exp:.2f}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    handlers = {
        "gen": cmd_gen,
        "oracle": cmd_oracle,
        "train": cmd_train,
        "eval": cmd_eval,
        "verify": cmd_verify,
        "bench": cmd_bench,
    }
    try:
        return handlers[args.verb](args)
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except AdbidError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
