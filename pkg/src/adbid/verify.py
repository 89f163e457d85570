"""Self-verification: property checks that the planner and simulator obey
the invariants the design relies on.

Each check returns a CheckResult; ``run_all`` runs the whole battery.  The
battery must also be able to fail: running it with ``corrupt=True`` flips
the ranking order through a test hook and every ranking-sensitive check is
expected to report a failure.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import oracle
from .auction import EpisodeRng, new_episode, resolve_bid, step
from .core import AdvertiserBrief, CampaignSpec, ImpressionOpportunity, StepTraffic
from .errors import DegenerateRankingError
from .exact import brute_force_solve, objective_value
from .oracle import build_upgrade_chain, plan, slot_efficiency, upgrade_efficiency
from .traffic import TrafficConfig, generate


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        mark = "ok" if self.passed else "FAIL"
        return f"[{mark}] {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _timed(name: str, fn) -> CheckResult:
    start = time.perf_counter()
    passed, detail = fn()
    return CheckResult(name, passed, detail, time.perf_counter() - start)


# ---------------------------------------------------------------------------
# Worked examples used as golden fixtures.

def example_campaign(variant: int = 1) -> tuple[CampaignSpec, AdvertiserBrief]:
    """Tiny two-IO, two-slot campaign with hand-checkable quantities.

    Variant 2 raises the first IO's conversion probability from 0.1 to 0.2,
    which flips the plan from holding both IOs at slot 2 to holding only the
    first IO at slot 1.
    """
    mu1 = 0.1 if variant == 1 else 0.2
    step_traffic = StepTraffic(
        mu=np.array([mu1, 0.04]),
        sigma=np.zeros(2),
        competitor_bids=np.array([[1.0, 0.375, 0.125], [1.0, 0.875, 0.25]]),
    )
    campaign = CampaignSpec(exposure_probs=(1.0, 0.8), steps=[step_traffic])
    return campaign, AdvertiserBrief(budget=1.0, target_cpa=10.0)


# (variant, io) -> (slot efficiencies by depth, chained upgrade efficiency)
EXAMPLE_EFFICIENCIES = {
    (1, 0): ((0.100, 0.267), 0.029),
    (1, 1): ((0.040, 0.046), 0.027),
    (2, 0): ((0.200, 0.533), 0.057),
    (2, 1): ((0.040, 0.046), 0.027),
}

# variant -> (held slot per IO (0 = none), expected cost, expected conversions)
EXAMPLE_PLANS = {
    ("upgrade", 1): ((2, 2), 1.0, 0.112),
    ("slot", 1): ((1, 0), 1.0, 0.1),
    ("upgrade", 2): ((1, 0), 1.0, 0.2),
    ("slot", 2): ((1, 0), 1.0, 0.2),
}


def check_example_efficiencies() -> CheckResult:
    def body():
        for (variant, io_idx), (slot_effs, upg_eff) in EXAMPLE_EFFICIENCIES.items():
            campaign, _ = example_campaign(variant)
            io = campaign.io(1, io_idx)
            h = campaign.exposure_probs
            for d, expect in enumerate(slot_effs, start=1):
                k = io.slot_cost(d) * h[d - 1]
                got = slot_efficiency(io.mu * h[d - 1], k)
                if round(got, 3) != expect:
                    return False, f"variant {variant} IO {io_idx} slot {d}: {got:.3f} != {expect}"
            chain = build_upgrade_chain(io, h)
            ups = [a for a in chain if a.source != 0]
            if len(ups) != 1 or round(ups[0].efficiency, 3) != upg_eff:
                return False, f"variant {variant} IO {io_idx} upgrade efficiency mismatch"
        return True, f"{len(EXAMPLE_EFFICIENCIES)} IOs match to 3 decimals"
    return _timed("example efficiencies", body)


def check_example_plans() -> CheckResult:
    def body():
        for (mode, variant), (held, cost, conv) in EXAMPLE_PLANS.items():
            campaign, brief = example_campaign(variant)
            sel = plan(campaign, brief, mode)
            got_held = tuple(
                int(v) for v in oracle.selection_to_assignment(sel, campaign)[0]
            )
            if got_held != held:
                return False, f"{mode} variant {variant}: held {got_held} != {held}"
            if abs(sel.expected_cost - cost) > 1e-12 or abs(sel.expected_conversions - conv) > 1e-12:
                return False, (
                    f"{mode} variant {variant}: cost/conv "
                    f"({sel.expected_cost}, {sel.expected_conversions}) != ({cost}, {conv})"
                )
        return True, f"{len(EXAMPLE_PLANS)} planned selections match exactly"
    return _timed("example plans", body)


# ---------------------------------------------------------------------------
# Random structured IOs for the slot/upgrade efficiency laws.

def sample_structured_ios(rng: np.random.Generator, n: int, depth: int):
    """Batch of IOs with strictly discounted slot prices and strictly
    decreasing exposure, the structure the efficiency laws assume.

    Adjacent exposure and discount levels are built from gaps bounded away
    from zero, so identity checks measure the algebra rather than float
    cancellation between nearly equal slots.

    Returns (mu (n,), h (n, depth), k (n, depth)).
    """
    mu = rng.uniform(1e-4, 1.0, size=n)
    levels = np.cumsum(rng.uniform(0.3, 1.0, size=(n, depth)), axis=1)
    scale = rng.uniform(0.5, 1.0, size=(n, 1))
    h = (scale * levels / levels[:, -1:])[:, ::-1]
    dlevels = np.cumsum(rng.uniform(0.3, 1.0, size=(n, depth)), axis=1)
    delta = (dlevels / dlevels[:, -1:])[:, ::-1]   # delta_1 == 1, decreasing
    k1 = rng.uniform(0.1, 5.0, size=(n, 1))
    k = k1 * delta
    assert (np.diff(h, axis=1) < 0).all() and (np.diff(k, axis=1) < 0).all()
    return mu, h, k


def _slot_eff_batch(mu: np.ndarray, h: np.ndarray, k: np.ndarray, spot: int = 64) -> np.ndarray:
    """Vectorized slot efficiencies, spot-checked against the scalar
    implementation on the first rows."""
    eff = mu[:, None] / k
    for row in range(min(spot, len(mu))):
        for d in range(h.shape[1]):
            got = slot_efficiency(mu[row] * h[row, d], k[row, d] * h[row, d])
            if not math.isclose(got, eff[row, d], rel_tol=1e-12):
                raise AssertionError(f"slot_efficiency disagrees at row {row} depth {d + 1}")
    return eff


def _upgrade_eff_batch(mu, h, k, i: int, j: int, spot: int = 64) -> np.ndarray:
    """Vectorized efficiency of the upgrade j+1 -> i+1 (0-based columns),
    spot-checked against the scalar implementation."""
    ec = k * h
    em = mu[:, None] * h
    eff = (em[:, i] - em[:, j]) / (ec[:, i] - ec[:, j])
    for row in range(min(spot, len(mu))):
        got = upgrade_efficiency(mu[row], k[row, i], h[row, i], k[row, j], h[row, j])
        if not math.isclose(got, eff[row], rel_tol=1e-12):
            raise AssertionError(f"upgrade_efficiency disagrees at row {row} ({j + 1}->{i + 1})")
    return eff


def check_depth_efficiency_monotone(n: int = 100_000, seed: int = 0) -> CheckResult:
    """Slot efficiency strictly increases with slot depth."""
    def body():
        rng = np.random.default_rng(seed)
        total = 0
        for depth in (2, 3, 4, 5):
            mu, h, k = sample_structured_ios(rng, n // 4, depth)
            eff = _slot_eff_batch(mu, h, k)
            if not (np.diff(eff, axis=1) > 0).all():
                bad = int(np.argwhere(np.diff(eff, axis=1) <= 0)[0][0])
                return False, f"depth {depth}: IO {bad} not monotone"
            total += len(mu)
        return True, f"{total} IOs monotone in depth"
    return _timed("slot efficiency monotone in depth", body)


def check_deepest_acquisition_dominates(n: int = 100_000, seed: int = 1) -> CheckResult:
    """Acquiring the deepest slot beats every possible upgrade."""
    def body():
        rng = np.random.default_rng(seed)
        total = 0
        for depth in (2, 3, 4, 5):
            mu, h, k = sample_structured_ios(rng, n // 4, depth)
            acq = _slot_eff_batch(mu, h, k)[:, -1]
            for j in range(depth):
                for i in range(j):
                    upg = _upgrade_eff_batch(mu, h, k, i, j)
                    if not (acq > upg).all():
                        return False, f"depth {depth}: upgrade {j + 1}->{i + 1} beats acquisition"
            total += len(mu)
        return True, f"{total} IOs, deepest acquisition dominates all upgrades"
    return _timed("deepest acquisition dominates upgrades", body)


def check_upgrade_interpolation(n: int = 100_000, seed: int = 2, rtol: float = 1e-12) -> CheckResult:
    """1/eff(j->i) is the exposure-weighted mix of 1/eff(j->m) and 1/eff(m->i)."""
    def body():
        rng = np.random.default_rng(seed)
        worst = 0.0
        total = 0
        for depth in (3, 4, 5):
            mu, h, k = sample_structured_ios(rng, n // 3, depth)
            for j in range(2, depth):        # worst slot of the triple
                for m in range(1, j):
                    for i in range(m):
                        e_ij = _upgrade_eff_batch(mu, h, k, i, j)
                        e_im = _upgrade_eff_batch(mu, h, k, i, m)
                        e_mj = _upgrade_eff_batch(mu, h, k, m, j)
                        beta = (h[:, i] - h[:, m]) / (h[:, i] - h[:, j])
                        lhs = 1.0 / e_ij
                        rhs = beta / e_im + (1.0 - beta) / e_mj
                        rel = np.abs(lhs - rhs) / np.abs(lhs)
                        worst = max(worst, float(rel.max()))
                        total += len(mu)
        if worst > rtol:
            return False, f"max relative error {worst:.3e} > {rtol:.0e}"
        return True, f"{total} triples, max relative error {worst:.3e}"
    return _timed("upgrade efficiency interpolation identity", body)


def check_merged_chain_efficiencies(n: int = 20_000, seed: int = 3) -> CheckResult:
    """Chained atoms have strictly decreasing efficiency and preserve the
    IO's total effective cost and conversions."""
    def body():
        rng = np.random.default_rng(seed)
        total = 0
        for depth in (2, 3, 4, 5):
            mu, h, k = sample_structured_ios(rng, n // 4, depth)
            for row in range(len(mu)):
                kd = tuple(k[row]) + (k[row, -1] * 0.5,)
                io = ImpressionOpportunity(
                    t=1, i=0, mu=float(mu[row]), sigma=0.0,
                    competitor_bids=kd,
                )
                chain = build_upgrade_chain(io, tuple(h[row]))
                effs = [a.efficiency for a in chain]
                if any(e2 >= e1 for e1, e2 in zip(effs, effs[1:])):
                    return False, f"depth {depth} row {row}: chain not strictly decreasing"
                cost = sum(a.delta_cost for a in chain)
                conv = sum(a.delta_conv for a in chain)
                if abs(cost - k[row, 0] * h[row, 0]) > 1e-12 or abs(conv - mu[row] * h[row, 0]) > 1e-12:
                    return False, f"depth {depth} row {row}: chain totals drift"
                total += 1
        return True, f"{total} chains strictly ordered with exact totals"
    return _timed("upgrade chains ordered and conservative", body)


# ---------------------------------------------------------------------------
# Constant-coefficient round trip.

def _small_campaign(rng: np.random.Generator) -> CampaignSpec:
    config = TrafficConfig(
        horizon=int(rng.integers(1, 4)),
        exposure_probs=tuple(np.sort(rng.uniform(0.3, 1.0, size=int(rng.integers(2, 5))))[::-1]),
        ios_mean=float(rng.integers(2, 9)),
        ios_dispersion=0.0,
        seed=int(rng.integers(0, 2**31 - 1)),
    )
    return generate(config)


def check_constant_alpha_round_trip(n_campaigns: int = 1000, seed: int = 4) -> CheckResult:
    """The slot plan's constant coefficient wins exactly the selected slots."""
    def body():
        rng = np.random.default_rng(seed)
        checked = 0
        for _ in range(n_campaigns):
            campaign = _small_campaign(rng)
            if campaign.total_ios == 0:
                continue
            spend = sum(
                float((st.competitor_bids[:, -2] * campaign.exposure_probs[-1]).sum())
                for st in campaign.steps
            )
            budget = float(rng.uniform(0.1, 1.5)) * max(spend, 1e-9)
            brief = AdvertiserBrief(budget=budget, target_cpa=float(rng.uniform(2.0, 40.0)))
            sel = plan(campaign, brief, "slot")
            try:
                alpha = oracle.bid_coefficient_slot(sel)
            except DegenerateRankingError:
                continue
            held = sel.held_slots()
            for t in range(1, campaign.horizon + 1):
                st = campaign.traffic(t)
                for i in range(len(st)):
                    won, slot_d, _ = resolve_bid(alpha * float(st.mu[i]), st.competitor_bids[i])
                    want = held.get((t, i))
                    if want is None:
                        if won:
                            return False, f"unselected IO ({t},{i}) won slot {slot_d}"
                    elif not won or slot_d != want:
                        return False, f"IO ({t},{i}) got {slot_d if won else None}, wanted {want}"
                    checked += 1
        return True, f"{checked} IO outcomes match the plan exactly"
    return _timed("constant coefficient wins exactly the plan", body)


# ---------------------------------------------------------------------------
# Exact solver cross-check.

def _without_io(campaign: CampaignSpec, t_idx: int, row: int) -> CampaignSpec:
    steps = []
    for idx, st in enumerate(campaign.steps):
        if idx == t_idx:
            keep = np.arange(len(st)) != row
            steps.append(StepTraffic(mu=st.mu[keep], sigma=st.sigma[keep],
                                     competitor_bids=st.competitor_bids[keep]))
        else:
            steps.append(st)
    return CampaignSpec(exposure_probs=campaign.exposure_probs, steps=steps)


def _shrink_mismatch(campaign, brief, predicate):
    """Greedy IO removal keeping the mismatch alive; returns the smaller case."""
    current = campaign
    improved = True
    while improved:
        improved = False
        for t_idx in range(len(current.steps)):
            for row in range(len(current.steps[t_idx])):
                smaller = _without_io(current, t_idx, row)
                if predicate(smaller, brief):
                    current = smaller
                    improved = True
                    break
            if improved:
                break
    return current


def _exact_instance_fails(campaign: CampaignSpec, brief: AdvertiserBrief) -> str | None:
    """Run one planner-vs-enumeration comparison; None when all claims hold."""
    # The enumerator re-sums costs in its own order, so the planner's own
    # holding can land an ulp above an exactly-spent budget and be rejected.
    # A 1e-13 relative headroom covers that; any extra atom it could admit is
    # worth far less than the 1e-9 score tolerances used below.
    headroom = 1 + 1e-13
    sel = plan(campaign, brief, "upgrade")
    assignment = oracle.selection_to_assignment(sel, campaign)
    breakdown = objective_value(assignment, campaign, brief.target_cpa)
    if abs(breakdown.score - sel.score) > 1e-9 * max(1.0, abs(sel.score)):
        return f"selection score {sel.score} != assignment score {breakdown.score}"
    if sel.expected_cost > brief.budget * (1 + 1e-12) + 1e-15:
        return f"selection cost {sel.expected_cost} exceeds budget {brief.budget}"
    _, exact = brute_force_solve(campaign, brief.budget * headroom, brief.target_cpa)
    if sel.score > exact.score + 1e-9:
        return f"planner score {sel.score} above exhaustive optimum {exact.score}"
    conv, cost = sel.expected_conversions, sel.expected_cost
    if conv > 0 and cost > 0 and cost / conv < brief.target_cpa:
        bound = oracle.gap_bound(sel, brief.budget)
        if exact.score - sel.score > bound + 1e-9:
            return (
                f"gap {exact.score - sel.score} exceeds certified bound {bound}"
            )
        # Re-solving with the budget the planner actually uses must be exact.
        b2 = cost
        sel2 = plan(campaign, AdvertiserBrief(budget=b2, target_cpa=brief.target_cpa), "upgrade")
        _, exact2 = brute_force_solve(campaign, b2 * headroom, brief.target_cpa)
        if abs(sel2.score - exact2.score) > 1e-9:
            return f"not exact at fully spent budget: {sel2.score} vs {exact2.score}"
    bigger = plan(campaign, AdvertiserBrief(budget=brief.budget * 1.2,
                                            target_cpa=brief.target_cpa), "upgrade")
    if bigger.score < sel.score - 1e-12:
        return f"score decreased with budget: {bigger.score} < {sel.score}"
    return None


def check_exact_cross(n_instances: int = 1000, seed: int = 5) -> CheckResult:
    """Planner vs exhaustive enumeration on small instances."""
    def body():
        rng = np.random.default_rng(seed)
        done = 0
        while done < n_instances:
            config = TrafficConfig(
                horizon=int(rng.integers(1, 3)),
                exposure_probs=tuple(np.sort(rng.uniform(0.3, 1.0, size=int(rng.integers(2, 4))))[::-1]),
                ios_mean=2.5,
                ios_dispersion=0.5,
                seed=int(rng.integers(0, 2**31 - 1)),
            )
            campaign = generate(config)
            if not (0 < campaign.total_ios <= 8):
                continue
            spend = sum(
                float((st.competitor_bids[:, 0] * campaign.exposure_probs[0]).sum())
                for st in campaign.steps
            )
            brief = AdvertiserBrief(
                budget=float(rng.uniform(0.05, 1.1)) * spend,
                target_cpa=float(rng.uniform(2.0, 40.0)),
            )
            problem = _exact_instance_fails(campaign, brief)
            if problem is not None:
                small = _shrink_mismatch(
                    campaign, brief, lambda c, b: _exact_instance_fails(c, b) is not None
                )
                return False, (
                    f"{problem}; minimized to {small.total_ios} IOs: {small.steps!r} "
                    f"budget={brief.budget} cpa={brief.target_cpa}"
                )
            done += 1
        return True, f"{done} instances match the exhaustive optimum"
    return _timed("planner matches exhaustive search", body)


# ---------------------------------------------------------------------------
# Simulator Monte Carlo.

class FixedStepBids:
    """Agent replaying precomputed per-step bid vectors."""

    def __init__(self, per_step: list[np.ndarray]):
        self.per_step = per_step

    def bids(self, campaign, brief, state):
        return self.per_step[state.t - 1]


def _mc_chunk(args) -> tuple[int, float, float]:
    campaign, brief, per_step, seed0, n = args
    agent = FixedStepBids(per_step)
    total = 0
    total_sq = 0.0
    cost = 0.0
    for j in range(n):
        state = new_episode(campaign, brief)
        rng = EpisodeRng(seed0 + j)
        for _ in range(campaign.horizon):
            step(campaign, brief, state, agent.bids(campaign, brief, state), rng)
        total += state.cumulative_conversions
        total_sq += state.cumulative_conversions**2
        cost += state.cumulative_cost
    return total, total_sq, cost


def mc_conversion_stats(campaign, brief, per_step_bids, n_trials: int, seed: int = 0,
                        jobs: int | None = None) -> tuple[float, float, float]:
    """Simulator mean conversions, its standard error, and mean cost."""
    jobs = jobs or min(os.cpu_count() or 1, 16)
    chunk = -(-n_trials // jobs)
    tasks = []
    offset = 0
    while offset < n_trials:
        size = min(chunk, n_trials - offset)
        tasks.append((campaign, brief, per_step_bids, seed + offset, size))
        offset += size
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_mc_chunk, tasks))
    else:
        parts = [_mc_chunk(t) for t in tasks]
    total = sum(p[0] for p in parts)
    total_sq = sum(p[1] for p in parts)
    cost = sum(p[2] for p in parts)
    mean = total / n_trials
    var = max(total_sq / n_trials - mean * mean, 0.0)
    se = math.sqrt(var / n_trials)
    return mean, se, cost / n_trials


def analytic_conversions(campaign: CampaignSpec, bids_per_step: list[np.ndarray]) -> float:
    """Expected conversions of fixed bids assuming no budget interruption."""
    total = 0.0
    for t in range(1, campaign.horizon + 1):
        traffic = campaign.traffic(t)
        for i in range(len(traffic)):
            won, slot_d, _ = resolve_bid(
                float(bids_per_step[t - 1][i]), traffic.competitor_bids[i]
            )
            if won:
                total += campaign.exposure_probs[slot_d - 1] * traffic.mu[i]
    return total


def check_simulator_monte_carlo(n_trials: int = 1_000_000, seed: int = 6,
                                jobs: int | None = None) -> CheckResult:
    """Simulated conversions match the analytic expectation within 3 SE."""
    def body():
        campaign, _ = example_campaign(1)
        # Budget chosen so both planned wins always fit: exposure is the only
        # randomness left and the analytic mean is exact.
        brief = AdvertiserBrief(budget=1.25, target_cpa=10.0)
        sel = plan(campaign, brief, "upgrade")
        per_step = [oracle.bids_upgrade(sel, campaign.traffic(1), 1)]
        want = analytic_conversions(campaign, per_step)
        mean, se, _ = mc_conversion_stats(campaign, brief, per_step, n_trials, seed, jobs)
        err = abs(mean - want)
        if err > 3 * se:
            return False, f"|{mean:.6f} - {want:.6f}| = {err:.2e} > 3 x SE {se:.2e}"
        return True, f"mean {mean:.6f} vs analytic {want:.6f} within {err / se if se else 0:.2f} SE"
    return _timed("simulator matches analytic conversion rate", body)


# ---------------------------------------------------------------------------

def run_all(fast: bool = False, seed: int = 0, corrupt: bool = False,
            jobs: int | None = None) -> list[CheckResult]:
    """The full battery.  ``fast`` shrinks sample sizes roughly 10x."""
    k = 10 if fast else 1
    old = oracle._NEGATE_EFFICIENCY
    oracle._NEGATE_EFFICIENCY = corrupt
    try:
        return [
            check_example_efficiencies(),
            check_example_plans(),
            check_depth_efficiency_monotone(n=100_000 // k, seed=seed),
            check_deepest_acquisition_dominates(n=100_000 // k, seed=seed + 1),
            check_upgrade_interpolation(n=100_000 // k, seed=seed + 2),
            check_merged_chain_efficiencies(n=20_000 // k, seed=seed + 3),
            check_constant_alpha_round_trip(n_campaigns=1000 // k, seed=seed + 4),
            check_exact_cross(n_instances=1000 // k, seed=seed + 5),
            check_simulator_monte_carlo(n_trials=1_000_000 // k, seed=seed + 6, jobs=jobs),
        ]
    finally:
        oracle._NEGATE_EFFICIENCY = old
