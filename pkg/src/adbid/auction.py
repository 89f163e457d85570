"""Multi-slot second-price auction simulator.

The agent submits one bid per IO.  If the bid ranks d-th among the agent's
bid plus all competitor bids it wins slot d (ties go to the agent) and pays
the d-th highest competitor bid, but only when the impression is actually
exposed.  Wins whose price would exceed the remaining budget are voided, so
realized cost never exceeds the budget.

Randomness is splittable: an :class:`EpisodeRng` derives one independent
stream per step, and within a step every IO consumes fixed draw positions,
so voiding one win never shifts the draws of later IOs or steps.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import AdvertiserBrief, CampaignSpec
from .errors import EpisodeFinishedError, InputError


def resolve_bid(bid: float, competitor_bids) -> tuple[bool, int | None, float]:
    """Place one bid against a descending competitor vector.

    Returns (won, slot, price).  The agent wins slot d when
    ``competitor_bids[d-1] <= bid < competitor_bids[d-2]`` (with an implicit
    +inf above the first slot); equality wins.  Losing returns
    (False, None, 0.0).  Negative bids are treated as zero.
    """
    cb = np.asarray(competitor_bids, dtype=float)
    slots = len(cb) - 1
    if slots < 1:
        raise InputError("competitor_bids needs at least 2 entries")
    if bid < 0:
        warnings.warn("negative bid treated as 0", stacklevel=2)
        bid = 0.0
    rank = int(np.sum(cb[:slots] > bid)) + 1
    if rank > slots:
        return False, None, 0.0
    return True, rank, float(cb[rank - 1])


def sample_exposure(slot: int, exposure_probs, rng: np.random.Generator) -> bool:
    """Bernoulli exposure draw for a win at ``slot``."""
    h = exposure_probs[slot - 1]
    return bool(rng.random() < h)


def sample_conversion(mu: float, sigma: float, exposed: bool, rng: np.random.Generator) -> bool:
    """Conversion draw: no exposure means no conversion; otherwise the
    conversion probability is Gaussian around mu, clipped to [0, 1]."""
    if not exposed:
        return False
    beta = mu + sigma * rng.standard_normal()
    beta = min(max(beta, 0.0), 1.0)
    return bool(rng.random() < beta)


@dataclass(frozen=True)
class BidOutcome:
    """Outcome of a single bid."""

    t: int
    i: int
    won: bool
    slot: int | None
    price_charged: float
    exposed: bool
    converted: bool


@dataclass
class StepRecord:
    """Columnar outcomes of one step; also the per-step history row."""

    t: int
    bids: np.ndarray
    mu: np.ndarray
    lwc: np.ndarray
    won: np.ndarray
    slot: np.ndarray        # winning slot, 0 when lost
    price: np.ndarray       # charged price (0 unless exposed win)
    exposed: np.ndarray
    converted: np.ndarray

    def __len__(self) -> int:
        return len(self.bids)

    def outcome(self, i: int) -> BidOutcome:
        won = bool(self.won[i])
        return BidOutcome(
            t=self.t,
            i=i,
            won=won,
            slot=int(self.slot[i]) if won else None,
            price_charged=float(self.price[i]),
            exposed=bool(self.exposed[i]),
            converted=bool(self.converted[i]),
        )

    def __iter__(self):
        return (self.outcome(i) for i in range(len(self)))


@dataclass
class EpisodeState:
    """Mutable campaign-progress state."""

    t: int                      # next step to play, 1-based
    remaining_budget: float
    cumulative_cost: float = 0.0
    cumulative_conversions: int = 0
    history: list[StepRecord] = field(default_factory=list)

    @property
    def steps_played(self) -> int:
        return self.t - 1


class EpisodeRng:
    """Seeded randomness for one episode with one independent stream per step."""

    def __init__(self, seed: int):
        if seed < 0:
            raise InputError("seed must be >= 0")
        self.seed = int(seed)

    def step_rng(self, t: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(entropy=self.seed, spawn_key=(t,)))


def new_episode(campaign: CampaignSpec, brief: AdvertiserBrief) -> EpisodeState:
    return EpisodeState(t=1, remaining_budget=brief.budget)


def step(
    campaign: CampaignSpec,
    brief: AdvertiserBrief,
    state: EpisodeState,
    bids,
    rng: EpisodeRng,
) -> tuple[EpisodeState, StepRecord]:
    """Play one step: resolve every bid, enforce the budget, sample
    exposures and conversions, and append the step to the history.

    Bids are processed in IO order; a win whose price exceeds the remaining
    budget is voided (treated as lost at zero cost).  Draw positions are
    fixed per IO, so voiding does not perturb later randomness.
    """
    t = state.t
    if t > campaign.horizon:
        raise EpisodeFinishedError(f"campaign has {campaign.horizon} steps, all played")
    traffic = campaign.traffic(t)
    m = len(traffic)
    bids = np.asarray(bids, dtype=float)
    if bids.shape != (m,):
        raise InputError(f"expected {m} bids for step {t}, got shape {bids.shape}")
    if m and bids.min() < 0:
        warnings.warn("negative bids treated as 0", stacklevel=2)
        bids = np.maximum(bids, 0.0)

    d_max = campaign.slot_count
    h = campaign.exposure_probs
    cb = traffic.competitor_bids

    gen = rng.step_rng(t)
    u_expo = gen.random(m)
    z_conv = gen.standard_normal(m)
    u_conv = gen.random(m)

    # rank of the agent's bid among all bids; ties go to the agent
    rank = (cb[:, :d_max] > bids[:, None]).sum(axis=1) + 1
    won = rank <= d_max
    slot = np.where(won, rank, 0)
    price_quote = np.where(won, cb[np.arange(m), np.minimum(rank, d_max) - 1], 0.0)

    exposed = np.zeros(m, dtype=bool)
    converted = np.zeros(m, dtype=bool)
    price = np.zeros(m)
    remaining = state.remaining_budget
    conversions = 0

    beta = (traffic.mu + traffic.sigma * z_conv).clip(0.0, 1.0)
    win_idx = won.nonzero()[0]
    for i in win_idx:
        p = price_quote[i]
        if p > remaining:
            won[i] = False      # voided: budget would be exceeded
            slot[i] = 0
            continue
        if u_expo[i] < h[slot[i] - 1]:
            exposed[i] = True
            remaining -= p
            price[i] = p
            if u_conv[i] < beta[i]:
                converted[i] = True
                conversions += 1

    record = StepRecord(
        t=t,
        bids=bids,
        mu=traffic.mu,
        lwc=traffic.lwc,
        won=won,
        slot=slot,
        price=price,
        exposed=exposed,
        converted=converted,
    )
    state.t = t + 1
    state.cumulative_cost += state.remaining_budget - remaining
    state.remaining_budget = remaining
    state.cumulative_conversions += conversions
    state.history.append(record)
    return state, record
