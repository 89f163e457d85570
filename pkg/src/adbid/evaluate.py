"""Episode simulation, bidding agents, and campaign-level evaluation.

An agent is anything with ``bids(campaign, brief, state) -> array`` producing
one bid per IO of the step ``state.t``.  ``run_episode`` plays a full
campaign under the second-price simulator; ``evaluate`` aggregates many
episodes (optionally across processes) into a MetricsReport.

``OilEnv`` adapts the simulator to the step protocol the imitation trainer
consumes: per-step policy inputs, teacher actions from a replanning oracle,
and episode bookkeeping.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import oracle
from .auction import EpisodeRng, EpisodeState, new_episode, step
from .core import AdvertiserBrief, CampaignSpec
from .errors import ConfigError, DegenerateRankingError, InputError
from .exact import realized_score
from .features import OBSERVATION_DIM, build_observation
from .oracle import MODES, Ranking, rank_items
from .policy import PolicyParams, forward

UPGRADE_INPUT_DIM = OBSERVATION_DIM + 2
_LOG_ALPHA_CLIP = 30.0


def input_dim_for(mode: str) -> int:
    return UPGRADE_INPUT_DIM if mode == "upgrade" else OBSERVATION_DIM


class _RankingCache:
    """Per-campaign ranking reuse; keeps a strong reference so ids stay valid."""

    def __init__(self, mode: str):
        self.mode = mode
        self._store: dict[int, tuple[CampaignSpec, Ranking]] = {}

    def get(self, campaign: CampaignSpec) -> Ranking:
        entry = self._store.get(id(campaign))
        if entry is None or entry[0] is not campaign:
            entry = (campaign, rank_items(campaign, self.mode))
            self._store[id(campaign)] = entry
        return entry[1]


class OracleBidder:
    """Replans from the realized state at every step."""

    def __init__(self, mode: str):
        if mode not in MODES:
            raise ConfigError(f"unknown mode {mode!r}")
        self.mode = mode
        self._cache = _RankingCache(mode)

    def bids(self, campaign: CampaignSpec, brief: AdvertiserBrief, state: EpisodeState) -> np.ndarray:
        ranking = self._cache.get(campaign)
        return oracle.replan(campaign, brief, state, self.mode, ranking=ranking)


class ConstantAlphaBidder:
    """Bids alpha * mu on every IO."""

    def __init__(self, alpha: float):
        if not (alpha >= 0) or not math.isfinite(alpha):
            raise InputError("alpha must be finite and >= 0")
        self.alpha = float(alpha)

    def bids(self, campaign: CampaignSpec, brief: AdvertiserBrief, state: EpisodeState) -> np.ndarray:
        return self.alpha * campaign.traffic(state.t).mu


def policy_inputs(
    mode: str,
    campaign: CampaignSpec,
    brief: AdvertiserBrief,
    state: EpisodeState,
) -> np.ndarray:
    """Network input rows for the current step (one row, or one per IO for
    the per-IO head)."""
    traffic = campaign.traffic(state.t)
    obs = build_observation(state, traffic, brief, campaign.horizon, campaign.category)
    if mode != "upgrade":
        return obs[None, :]
    m = len(traffic)
    rows = np.empty((m, UPGRADE_INPUT_DIM))
    rows[:, :OBSERVATION_DIM] = obs
    rows[:, OBSERVATION_DIM] = traffic.mu
    rows[:, OBSERVATION_DIM + 1] = traffic.sigma
    return rows


def actions_to_bids(mode: str, actions: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Turn head actions into per-IO bids for one step."""
    if mode == "slot":
        alpha = math.exp(float(np.clip(actions[0, 0], -_LOG_ALPHA_CLIP, _LOG_ALPHA_CLIP)))
        return alpha * mu
    if mode == "2s":
        log_a0, slope, intercept = (float(v) for v in actions[0])
        alpha0 = math.exp(float(np.clip(log_a0, -_LOG_ALPHA_CLIP, _LOG_ALPHA_CLIP)))
        curve = oracle.curve_from_params(alpha0, slope, intercept)
        return oracle.apply_two_slopes(curve, mu)
    bids = np.asarray(actions, dtype=float).reshape(-1)
    if len(bids) != len(mu):
        raise InputError(f"expected {len(mu)} per-IO actions, got {len(bids)}")
    return np.maximum(bids, 0.0)


class PolicyBidder:
    """Bids from a trained policy using only real-time information."""

    def __init__(self, params: PolicyParams):
        self.params = params
        self.mode = params.config.head
        expected = input_dim_for(self.mode)
        if params.config.input_dim != expected:
            raise ConfigError(
                f"policy input_dim {params.config.input_dim} does not match "
                f"{expected} for mode {self.mode!r}"
            )

    def bids(self, campaign: CampaignSpec, brief: AdvertiserBrief, state: EpisodeState) -> np.ndarray:
        traffic = campaign.traffic(state.t)
        if len(traffic) == 0:
            return np.zeros(0)
        x = policy_inputs(self.mode, campaign, brief, state)
        actions = forward(self.params, x)
        return actions_to_bids(self.mode, actions, traffic.mu)


@dataclass(frozen=True)
class EpisodeSpec:
    """One evaluation episode: a campaign, contract terms, and a seed."""

    campaign: CampaignSpec
    brief: AdvertiserBrief
    seed: int
    index: int = 0


@dataclass(frozen=True)
class EpisodeRow:
    index: int
    seed: int
    budget: float
    target_cpa: float
    cost: float
    conversions: int
    score: float

    @property
    def cpa(self) -> float:
        return self.cost / self.conversions if self.conversions > 0 else math.inf

    @property
    def spend_frac(self) -> float:
        return self.cost / self.budget if self.budget > 0 else 0.0

    def as_dict(self) -> dict:
        return {
            "episode": self.index,
            "seed": self.seed,
            "budget": self.budget,
            "target_cpa": self.target_cpa,
            "cost": self.cost,
            "conversions": self.conversions,
            "cpa": self.cpa if self.conversions > 0 else None,
            "score": self.score,
        }


def run_episode(campaign: CampaignSpec, brief: AdvertiserBrief, agent, seed: int,
                index: int = 0) -> EpisodeRow:
    state = new_episode(campaign, brief)
    rng = EpisodeRng(seed)
    for _ in range(campaign.horizon):
        bids = agent.bids(campaign, brief, state)
        step(campaign, brief, state, bids, rng)
    return EpisodeRow(
        index=index,
        seed=seed,
        budget=brief.budget,
        target_cpa=brief.target_cpa,
        cost=state.cumulative_cost,
        conversions=state.cumulative_conversions,
        score=realized_score(state.cumulative_conversions, state.cumulative_cost, brief.target_cpa),
    )


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    if len(values) == 0:
        return 0.0, 0.0
    mean = float(np.mean(values))
    if len(values) < 2:
        return mean, 0.0
    return mean, float(np.std(values, ddof=1) / np.sqrt(len(values)))


@dataclass
class MetricsReport:
    """Per-episode rows plus mean +/- standard error aggregates."""

    rows: list[EpisodeRow] = field(default_factory=list)

    @property
    def scores(self) -> np.ndarray:
        return np.array([r.score for r in self.rows])

    def summary(self) -> dict:
        scores = self.scores
        spend = np.array([r.spend_frac for r in self.rows])
        conv = np.array([float(r.conversions) for r in self.rows])
        score_mean, score_se = _mean_se(scores)
        spend_mean, spend_se = _mean_se(spend)
        conv_mean, conv_se = _mean_se(conv)
        on_target = [r for r in self.rows if r.conversions > 0]
        cpa_ok = sum(1 for r in on_target if r.cpa <= r.target_cpa)
        return {
            "episodes": len(self.rows),
            "score_mean": score_mean,
            "score_se": score_se,
            "conversions_mean": conv_mean,
            "conversions_se": conv_se,
            "spend_frac_mean": spend_mean,
            "spend_frac_se": spend_se,
            "cpa_within_target": cpa_ok,
            "cpa_defined": len(on_target),
        }

    def format_lines(self) -> list[str]:
        s = self.summary()
        return [
            f"episodes: {s['episodes']}",
            f"score: {s['score_mean']:.4f} +/- {s['score_se']:.4f}",
            f"conversions: {s['conversions_mean']:.2f} +/- {s['conversions_se']:.2f}",
            f"spend fraction: {s['spend_frac_mean']:.4f} +/- {s['spend_frac_se']:.4f}",
            f"cpa within target: {s['cpa_within_target']}/{s['cpa_defined']}",
        ]


def _run_spec(args) -> EpisodeRow:
    agent, spec = args
    return run_episode(spec.campaign, spec.brief, agent, spec.seed, index=spec.index)


def evaluate(agent, episodes: list[EpisodeSpec], jobs: int = 1) -> MetricsReport:
    """Play every episode and aggregate; results are ordered by spec index
    regardless of worker scheduling."""
    if jobs <= 1 or len(episodes) <= 1:
        rows = [_run_spec((agent, spec)) for spec in episodes]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunk = max(1, len(episodes) // (4 * jobs))
            rows = list(pool.map(_run_spec, [(agent, s) for s in episodes], chunksize=chunk))
    rows.sort(key=lambda r: r.index)
    return MetricsReport(rows=rows)


def efficient_spend(campaign: CampaignSpec, target_cpa: float, mode: str = "upgrade",
                    ranking: Ranking | None = None) -> float:
    """Total cost of every ranked atom at least 1/target_cpa efficient: the
    budget that buys all supply still priced under the target."""
    if ranking is None:
        ranking = rank_items(campaign, mode)
    mask = ranking.efficiency >= 1.0 / target_cpa
    return float(ranking.delta_cost[mask].sum())


def make_episodes(
    campaigns: list[CampaignSpec],
    n: int,
    seed: int = 0,
    budget_frac: tuple[float, float] = (0.25, 1.0),
    cpa_range: tuple[float, float] = (4.0, 12.0),
    reference_cpa: float = 8.0,
) -> list[EpisodeSpec]:
    """Deterministic evaluation set: budgets are drawn as a fraction of each
    campaign's efficient spend at the reference CPA, targets uniformly from
    cpa_range."""
    if not campaigns:
        raise InputError("need at least one campaign")
    rng = np.random.default_rng(seed)
    spends = [efficient_spend(c, reference_cpa) for c in campaigns]
    specs = []
    for j in range(n):
        c = j % len(campaigns)
        if spends[c] <= 0:
            raise InputError(f"campaign {c} has no supply under CPA {reference_cpa}")
        budget = float(rng.uniform(*budget_frac)) * spends[c]
        target = float(rng.uniform(*cpa_range))
        specs.append(EpisodeSpec(
            campaign=campaigns[c],
            brief=AdvertiserBrief(budget=budget, target_cpa=target),
            seed=int(rng.integers(0, 2**31 - 1)),
            index=j,
        ))
    return specs


def alpha_grid_for(campaigns: list[CampaignSpec], size: int = 20) -> np.ndarray:
    """Candidate constant coefficients spanning the efficiency range of the
    campaigns' ranked atoms (reciprocal efficiencies, 5th..95th percentile,
    geometric)."""
    inv = []
    for c in campaigns:
        eff = rank_items(c, "upgrade").efficiency
        eff = eff[np.isfinite(eff) & (eff > 0)]
        inv.append(1.0 / eff)
    inv = np.concatenate(inv)
    if len(inv) == 0:
        raise InputError("campaigns have no positively priced slots")
    lo, hi = np.percentile(inv, [5.0, 95.0])
    lo = max(lo, 1e-12)
    hi = max(hi, lo * (1 + 1e-9))
    return np.geomspace(lo, hi, size)


def best_constant_alpha(
    episodes: list[EpisodeSpec],
    grid: np.ndarray | None = None,
    jobs: int = 1,
) -> tuple[float, MetricsReport, list[tuple[float, float]]]:
    """Evaluate every grid coefficient on the same episodes; returns the best
    (alpha, its report) and the (alpha, mean score) table."""
    if grid is None:
        campaigns = list({id(s.campaign): s.campaign for s in episodes}.values())
        grid = alpha_grid_for(campaigns)
    table = []
    best = None
    for alpha in grid:
        report = evaluate(ConstantAlphaBidder(float(alpha)), episodes, jobs=jobs)
        mean = report.summary()["score_mean"]
        table.append((float(alpha), mean))
        if best is None or mean > best[1]:
            best = (float(alpha), mean, report)
    return best[0], best[2], table


@dataclass(frozen=True)
class BriefSampler:
    """Draws (budget, target CPA) pairs scaled to a campaign's supply."""

    budget_frac: tuple[float, float] = (0.25, 1.0)
    cpa_range: tuple[float, float] = (4.0, 12.0)
    reference_cpa: float = 8.0

    def sample(self, spend: float, rng: np.random.Generator) -> AdvertiserBrief:
        budget = float(rng.uniform(*self.budget_frac)) * spend
        target = float(rng.uniform(*self.cpa_range))
        return AdvertiserBrief(budget=budget, target_cpa=target)


class OilEnv:
    """Simulator wrapper exposing the imitation trainer's step protocol.

    Each step the env serves policy inputs and, when defined, the action the
    replanning oracle would take from the same realized state; ``act``
    advances the auction with the student's own bids.  Steps where the oracle
    selects nothing (or its action is otherwise undefined) return None
    targets and are excluded from the training buffer.
    """

    def __init__(
        self,
        campaigns: list[CampaignSpec],
        mode: str,
        sampler: BriefSampler | None = None,
        seed: int = 0,
    ):
        if mode not in MODES:
            raise ConfigError(f"unknown mode {mode!r}")
        if not campaigns:
            raise InputError("need at least one campaign")
        self.campaigns = campaigns
        self.mode = mode
        self.sampler = sampler or BriefSampler()
        self.input_dim = input_dim_for(mode)
        self._rng = np.random.default_rng(seed)
        self._cache = _RankingCache(mode)
        self._spends = [
            efficient_spend(c, self.sampler.reference_cpa, mode="upgrade")
            for c in campaigns
        ]
        if all(s <= 0 for s in self._spends):
            raise InputError("no campaign has supply under the reference CPA")
        self.episode = -1
        self._step_inputs: np.ndarray | None = None

    def reset(self) -> None:
        self.episode += 1
        while True:
            c = int(self._rng.integers(len(self.campaigns)))
            if self._spends[c] > 0:
                break
        self.campaign = self.campaigns[c]
        self.brief = self.sampler.sample(self._spends[c], self._rng)
        self.ranking = self._cache.get(self.campaign)
        self.state = new_episode(self.campaign, self.brief)
        self._episode_rng = EpisodeRng(int(self._rng.integers(0, 2**31 - 1)))
        self._step_inputs = None

    def current_inputs(self) -> np.ndarray:
        if self._step_inputs is None:
            self._step_inputs = policy_inputs(self.mode, self.campaign, self.brief, self.state)
        return self._step_inputs

    def oracle_targets(self) -> np.ndarray | None:
        t = self.state.t
        traffic = self.campaign.traffic(t)
        sel = oracle.select_prefix(
            self.ranking.from_step(t),
            self.brief.budget,
            self.brief.target_cpa,
            carried_cost=self.state.cumulative_cost,
            carried_conversions=float(self.state.cumulative_conversions),
        )
        if len(sel) == 0:
            return None
        if self.mode == "slot":
            try:
                alpha = oracle.bid_coefficient_slot(sel)
            except DegenerateRankingError:
                return None
            if alpha <= 0:
                return None
            return np.array([[math.log(alpha)]])
        if self.mode == "upgrade":
            if len(traffic) == 0:
                return None
            return oracle.bids_upgrade(sel, traffic, t)[:, None]
        raw = oracle.bids_upgrade(sel, traffic, t) if len(traffic) else np.zeros(0)
        held = raw > 0
        alpha0 = oracle._alpha0_from_boundary(sel)
        if alpha0 <= 0:
            return None
        if held.any():
            try:
                curve = oracle.fit_two_slopes(raw, traffic.mu, held, alpha0=alpha0)
            except InputError:
                return None
            slope, intercept = curve.slope, curve.intercept
        else:
            slope, intercept = 0.0, 1.0 / alpha0
        return np.array([[math.log(alpha0), slope, intercept]])

    def act(self, actions: np.ndarray) -> bool:
        traffic = self.campaign.traffic(self.state.t)
        bids = actions_to_bids(self.mode, actions, traffic.mu)
        step(self.campaign, self.brief, self.state, bids, self._episode_rng)
        self._step_inputs = None
        return self.state.t > self.campaign.horizon

    def episode_summary(self) -> dict:
        s = self.state
        return {
            "episode": self.episode,
            "budget": self.brief.budget,
            "target_cpa": self.brief.target_cpa,
            "cost": s.cumulative_cost,
            "conversions": s.cumulative_conversions,
            "score": realized_score(s.cumulative_conversions, s.cumulative_cost, self.brief.target_cpa),
        }
