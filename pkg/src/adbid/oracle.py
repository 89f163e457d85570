"""Hindsight bid planner for multi-slot second-price campaigns.

The campaign-level problem is a nonlinear multiple-choice knapsack: pick at
most one slot per IO to maximize penalized conversions

    U = min(1, (K * conv / cost)^2) * conv,   cost <= B,

where conv and cost are exposure-weighted expectations.  The planner reduces
it to a greedy scan over *atoms*: per IO, an acquisition of the deepest slot
followed by incremental slot upgrades.  Within an IO the atoms form a chain
whose efficiencies (conversions gained per unit cost) are made non-increasing
by merging any upgrade that is more efficient than its predecessor; a prefix
of the chain is then always a realizable holding.  All atoms are ranked by
efficiency and the best-scoring affordable prefix is selected.

Two ranking modes exist: ``upgrade`` ranks the merged chain atoms by their
marginal efficiency; ``slot`` ranks each slot by its standalone efficiency
``mu / k_d`` (both modes account cost/value through the same chain deltas).
A third bidding mode, ``2s``, compresses the upgrade plan into a two-piece
bid coefficient curve fitted per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .auction import EpisodeState
from .core import AdvertiserBrief, CampaignSpec, ImpressionOpportunity, StepTraffic
from .errors import ConfigError, DegenerateRankingError, InputError

MODES = ("slot", "upgrade", "2s")

# Verification hook: when True, rank_items negates every efficiency before
# sorting, deliberately corrupting the greedy order.  The self-check suite
# flips this to prove that its properties can fail.
_NEGATE_EFFICIENCY = False

# Relative margin added to constant bid coefficients so float rounding can
# never drop the marginal accepted item (ties are won by the agent, but the
# product alpha * mu may round one ulp below the stored cost).
_ALPHA_MARGIN = 1e-12


def slot_efficiency(mu: float, k: float) -> float:
    """Conversions per unit cost of winning one slot outright: mu / k_d.

    The exposure probability cancels (both cost and value scale with h_d).
    A zero cost means infinite efficiency: a free slot is always worth
    taking first.
    """
    if k < 0:
        raise InputError(f"slot cost must be >= 0, got {k}")
    if k == 0:
        return math.inf
    return mu / k


def upgrade_efficiency(mu: float, k_to: float, h_to: float, k_from: float, h_from: float) -> float:
    """Marginal efficiency of moving one IO from a worse slot to a better one.

    Extra conversions are mu * (h_to - h_from); extra cost is the difference
    of effective costs.  A non-positive cost difference is a free upgrade and
    reports infinite efficiency; equal exposure probabilities make the
    upgrade worthless (efficiency 0).
    """
    dm = mu * (h_to - h_from)
    dc = k_to * h_to - k_from * h_from
    if dc <= 0:
        return math.inf
    return dm / dc


@dataclass(frozen=True)
class UpgradeItem:
    """One atom of the greedy ranking.

    ``slot`` is the slot held after taking the atom.  ``source`` is the slot
    held before (0 when the atom acquires the IO from scratch).  Merged
    upgrades may skip slots, so source can exceed slot + 1.
    """

    t: int
    i: int
    slot: int
    source: int
    delta_cost: float
    delta_conv: float
    efficiency: float


def _build_chain(ec: list, em: list, d_max: int) -> list[list]:
    """Merge one IO's acquisition + upgrades into a non-increasing chain.

    ``ec``/``em`` hold effective cost/conversions per slot (index d-1).
    Returns [target_slot, source_slot, delta_cost, delta_conv, efficiency]
    rows in chain order (deepest slot first).
    """
    inf = math.inf
    stack: list[list] = []
    prev_c = 0.0
    prev_m = 0.0
    source = 0
    for target in range(d_max, 0, -1):
        c = ec[target - 1]
        m = em[target - 1]
        dc = c - prev_c
        dm = m - prev_m
        prev_c = c
        prev_m = m
        eff = dm / dc if dc > 0 else inf
        while stack and eff > stack[-1][4]:
            merged = stack.pop()
            dc += merged[2]
            dm += merged[3]
            source = merged[1]
            eff = dm / dc if dc > 0 else inf
        stack.append([target, source, dc, dm, eff])
        source = target
    return stack


def build_upgrade_chain(io: ImpressionOpportunity, exposure_probs) -> list[UpgradeItem]:
    """Chain atoms for a single IO, deepest slot first."""
    h = np.asarray(exposure_probs, dtype=float)
    d_max = io.slot_count
    if len(h) != d_max:
        raise ConfigError(
            f"exposure_probs has {len(h)} entries but competitor_bids implies {d_max} slots"
        )
    ec = [io.competitor_bids[d] * h[d] for d in range(d_max)]
    em = [io.mu * h[d] for d in range(d_max)]
    return [
        UpgradeItem(io.t, io.i, target, source, dc, dm, eff)
        for target, source, dc, dm, eff in _build_chain(ec, em, d_max)
    ]


@dataclass
class Ranking:
    """All atoms of a campaign sorted by efficiency (descending).

    Ties are broken by (t, i) ascending and then slot *descending*, so that
    equally efficient atoms of one IO keep their chain order (deeper slots
    first) and every prefix remains a realizable holding.
    """

    mode: str
    t: np.ndarray
    i: np.ndarray
    slot: np.ndarray
    source: np.ndarray
    delta_cost: np.ndarray
    delta_conv: np.ndarray
    efficiency: np.ndarray

    def __len__(self) -> int:
        return len(self.efficiency)

    def item(self, j: int) -> UpgradeItem:
        return UpgradeItem(
            t=int(self.t[j]),
            i=int(self.i[j]),
            slot=int(self.slot[j]),
            source=int(self.source[j]),
            delta_cost=float(self.delta_cost[j]),
            delta_conv=float(self.delta_conv[j]),
            efficiency=float(self.efficiency[j]),
        )

    def items(self) -> list[UpgradeItem]:
        return [self.item(j) for j in range(len(self))]

    def from_step(self, t: int) -> "Ranking":
        """Atoms still biddable at step t, preserving rank order."""
        if t <= 1:
            return self
        # flatnonzero + take beats boolean indexing ~3x on replan-sized arrays
        idx = np.flatnonzero(self.t >= t)
        return Ranking(
            mode=self.mode,
            t=self.t.take(idx),
            i=self.i.take(idx),
            slot=self.slot.take(idx),
            source=self.source.take(idx),
            delta_cost=self.delta_cost.take(idx),
            delta_conv=self.delta_conv.take(idx),
            efficiency=self.efficiency.take(idx),
        )


def rank_items(campaign: CampaignSpec, mode: str) -> Ranking:
    """Build the campaign-wide efficiency ranking for ``slot`` or ``upgrade``
    mode (the ``2s`` bidder plans with the upgrade ranking)."""
    if mode == "2s":
        mode = "upgrade"
    if mode not in ("slot", "upgrade"):
        raise ConfigError(f"unknown ranking mode {mode!r}")
    d_max = campaign.slot_count
    h = campaign.exposure_probs

    ts, is_, slots, sources, dcs, dms, effs = [], [], [], [], [], [], []
    for t, st in enumerate(campaign.steps, start=1):
        m = len(st)
        if m == 0:
            continue
        k_raw = st.competitor_bids[:, :d_max]
        ec = k_raw * h
        em = st.mu[:, None] * h
        if mode == "slot":
            dc = np.empty_like(ec)
            dm = np.empty_like(em)
            dc[:, :-1] = ec[:, :-1] - ec[:, 1:]
            dc[:, -1] = ec[:, -1]
            dm[:, :-1] = em[:, :-1] - em[:, 1:]
            dm[:, -1] = em[:, -1]
            with np.errstate(divide="ignore"):
                eff = np.where(k_raw > 0, st.mu[:, None] / np.where(k_raw > 0, k_raw, 1.0), np.inf)
            slot_ix = np.broadcast_to(np.arange(1, d_max + 1), (m, d_max))
            source_ix = np.where(slot_ix < d_max, slot_ix + 1, 0)
            ts.append(np.full(m * d_max, t, dtype=np.int32))
            is_.append(np.repeat(np.arange(m, dtype=np.int32), d_max))
            slots.append(slot_ix.ravel().astype(np.int32))
            sources.append(source_ix.ravel().astype(np.int32))
            dcs.append(dc.ravel())
            dms.append(dm.ravel())
            effs.append(eff.ravel())
        else:
            ec_l = ec.tolist()
            em_l = em.tolist()
            n_est = m * d_max
            a_t = np.full(n_est, t, dtype=np.int32)
            a_i = np.empty(n_est, dtype=np.int32)
            a_slot = np.empty(n_est, dtype=np.int32)
            a_src = np.empty(n_est, dtype=np.int32)
            a_dc = np.empty(n_est)
            a_dm = np.empty(n_est)
            a_eff = np.empty(n_est)
            cursor = 0
            for i in range(m):
                for target, source, dc_v, dm_v, eff_v in _build_chain(ec_l[i], em_l[i], d_max):
                    a_i[cursor] = i
                    a_slot[cursor] = target
                    a_src[cursor] = source
                    a_dc[cursor] = dc_v
                    a_dm[cursor] = dm_v
                    a_eff[cursor] = eff_v
                    cursor += 1
            ts.append(a_t[:cursor])
            is_.append(a_i[:cursor])
            slots.append(a_slot[:cursor])
            sources.append(a_src[:cursor])
            dcs.append(a_dc[:cursor])
            dms.append(a_dm[:cursor])
            effs.append(a_eff[:cursor])

    if not ts:
        empty_f = np.empty(0)
        empty_i = np.empty(0, dtype=np.int32)
        return Ranking(mode, empty_i, empty_i, empty_i, empty_i, empty_f, empty_f, empty_f)

    t_arr = np.concatenate(ts)
    i_arr = np.concatenate(is_)
    slot_arr = np.concatenate(slots)
    src_arr = np.concatenate(sources)
    dc_arr = np.concatenate(dcs)
    dm_arr = np.concatenate(dms)
    eff_arr = np.concatenate(effs)
    if _NEGATE_EFFICIENCY:
        eff_arr = -eff_arr
    order = np.lexsort((-slot_arr, i_arr, t_arr, -eff_arr))
    return Ranking(
        mode=mode,
        t=t_arr[order],
        i=i_arr[order],
        slot=slot_arr[order],
        source=src_arr[order],
        delta_cost=dc_arr[order],
        delta_conv=dm_arr[order],
        efficiency=eff_arr[order],
    )


def expected_score(conversions: float, cost: float, target_cpa: float) -> float:
    """Penalized expected conversions: min(1, (K / CPA)^2) * conversions."""
    if conversions <= 0:
        return 0.0
    if cost <= 0:
        return conversions
    ratio = target_cpa * conversions / cost
    return min(1.0, ratio * ratio) * conversions


@dataclass
class SelectionSet:
    """Accepted prefix of a ranking plus its expected totals.

    Cost/conversion totals include the carried-in realized amounts handed to
    :func:`select_prefix`, so ``expected_cost <= budget`` always holds.
    """

    mode: str
    budget: float
    target_cpa: float
    carried_cost: float
    carried_conversions: float
    t: np.ndarray
    i: np.ndarray
    slot: np.ndarray
    source: np.ndarray
    delta_cost: np.ndarray
    delta_conv: np.ndarray
    efficiency: np.ndarray
    expected_cost: float
    expected_conversions: float
    score: float
    next_efficiency: float | None = None   # efficiency of the first rejected atom

    def __len__(self) -> int:
        return len(self.efficiency)

    @property
    def planned_cost(self) -> float:
        return self.expected_cost - self.carried_cost

    @property
    def planned_conversions(self) -> float:
        return self.expected_conversions - self.carried_conversions

    def items(self) -> list[UpgradeItem]:
        return [
            UpgradeItem(
                int(self.t[j]), int(self.i[j]), int(self.slot[j]), int(self.source[j]),
                float(self.delta_cost[j]), float(self.delta_conv[j]), float(self.efficiency[j]),
            )
            for j in range(len(self))
        ]

    def held_slots(self) -> dict[tuple[int, int], int]:
        """Final holding: the best (lowest) selected slot per IO."""
        held: dict[tuple[int, int], int] = {}
        for t, i, d in zip(self.t.tolist(), self.i.tolist(), self.slot.tolist()):
            key = (t, i)
            if key not in held or d < held[key]:
                held[key] = d
        return held


def select_prefix(
    ranking: Ranking,
    budget: float,
    target_cpa: float,
    carried_cost: float = 0.0,
    carried_conversions: float = 0.0,
) -> SelectionSet:
    """Greedy prefix selection over a ranked atom list.

    Scans atoms in rank order accumulating expected cost/conversions on top
    of the carried totals, stops at the first atom that would push cost past
    the budget, and returns the prefix whose penalized score is maximal
    (ties resolved toward the shortest prefix; the empty prefix competes with
    its carried-in score).
    """
    if not (math.isfinite(budget) and budget >= 0):
        raise InputError(f"budget must be finite and >= 0, got {budget}")
    if not (math.isfinite(target_cpa) and target_cpa > 0):
        raise InputError(f"target_cpa must be finite and > 0, got {target_cpa}")

    base_score = expected_score(carried_conversions, carried_cost, target_cpa)
    n_total = len(ranking)
    if n_total == 0:
        cut = 0
    else:
        cum_cost = carried_cost + np.cumsum(ranking.delta_cost)
        cum_conv = carried_conversions + np.cumsum(ranking.delta_conv)
        over = cum_cost > budget
        cut = int(np.argmax(over)) if over.any() else n_total

    if cut == 0:
        best_j = 0
        score = base_score
        total_cost, total_conv = carried_cost, carried_conversions
    else:
        cc = cum_cost[:cut]
        cm = cum_conv[:cut]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = target_cpa * cm / cc
            penalty = np.minimum(1.0, ratio * ratio)
        scores = np.where(cm > 0, np.where(cc > 0, penalty, 1.0) * cm, 0.0)
        best = int(np.argmax(scores))
        if scores[best] > base_score:
            best_j = best + 1
            score = float(scores[best])
            total_cost = float(cc[best])
            total_conv = float(cm[best])
        else:
            best_j = 0
            score = base_score
            total_cost, total_conv = carried_cost, carried_conversions

    sl = slice(0, best_j)
    return SelectionSet(
        mode=ranking.mode,
        budget=budget,
        target_cpa=target_cpa,
        carried_cost=carried_cost,
        carried_conversions=carried_conversions,
        t=ranking.t[sl],
        i=ranking.i[sl],
        slot=ranking.slot[sl],
        source=ranking.source[sl],
        delta_cost=ranking.delta_cost[sl],
        delta_conv=ranking.delta_conv[sl],
        efficiency=ranking.efficiency[sl],
        expected_cost=total_cost,
        expected_conversions=total_conv,
        score=score,
        next_efficiency=float(ranking.efficiency[best_j]) if best_j < n_total else None,
    )


def bid_coefficient_slot(selection: SelectionSet, next_efficiency: float | None = None) -> float:
    """Constant bid coefficient that wins exactly the selected slots.

    With bids ``alpha * mu`` the agent wins slot d of an IO iff
    ``alpha >= k_d / mu``, i.e. iff the slot's efficiency is at least
    ``1 / alpha``; taking alpha as the reciprocal of the least accepted
    efficiency therefore wins all accepted slots (the marginal one at its
    exact cost) and none of the rejected ones.  A 1e-12 relative margin
    keeps float rounding from losing the marginal slot.

    When the efficiency of the first rejected item is supplied and the
    margin-adjusted coefficient would win it too, the instance cannot be
    separated by a constant coefficient and DegenerateRankingError is raised.
    """
    if selection.mode != "slot":
        raise ConfigError("bid_coefficient_slot requires a slot-mode selection")
    if len(selection) == 0:
        return 0.0
    min_eff = float(selection.efficiency[-1])
    if min_eff <= 0:
        raise DegenerateRankingError("accepted item with non-positive efficiency")
    alpha = (1.0 / min_eff) * (1.0 + _ALPHA_MARGIN) if math.isfinite(min_eff) else 0.0
    if next_efficiency is None:
        next_efficiency = selection.next_efficiency
    if next_efficiency is not None and next_efficiency > 0 and alpha > 0:
        if 1.0 / next_efficiency <= alpha:
            raise DegenerateRankingError(
                "first rejected item is as efficient as the last accepted one; "
                "a constant coefficient cannot separate them"
            )
    return alpha


def _held_for_step(selection: SelectionSet, t: int, m: int) -> np.ndarray:
    """Held slot per IO of step t (0 where nothing is held)."""
    held = np.zeros(m, dtype=np.int64)
    mask = selection.t == t
    if mask.any():
        big = np.full(m, np.iinfo(np.int64).max)
        np.minimum.at(big, selection.i[mask], selection.slot[mask])
        held = np.where(big < np.iinfo(np.int64).max, big, 0)
    return held


def bids_slot(selection: SelectionSet, traffic: StepTraffic) -> np.ndarray:
    """Constant-coefficient bids for one step: alpha * mu on every IO."""
    alpha = bid_coefficient_slot(selection)
    return alpha * traffic.mu


def bids_upgrade(selection: SelectionSet, traffic: StepTraffic, t: int) -> np.ndarray:
    """Midpoint bids for one step: an IO held at slot d is bid
    ``(k_d + k_{d-1}) / 2`` (with ``k_0 = 2 k_1``), which wins exactly slot d;
    unheld IOs are bid 0."""
    m = len(traffic)
    held = _held_for_step(selection, t, m)
    bids = np.zeros(m)
    idx = np.flatnonzero(held)
    if len(idx):
        d = held[idx]
        cb = traffic.competitor_bids
        k_d = cb[idx, d - 1]
        k_up = np.where(d > 1, cb[idx, np.maximum(d - 2, 0)], 2.0 * cb[idx, 0])
        bids[idx] = 0.5 * (k_d + k_up)
    return bids


@dataclass(frozen=True)
class TwoSlopesParams:
    """Two-piece bid coefficient curve.

    Below ``crossing_mu`` the bid is ``alpha0 * mu``; above it the inverse
    coefficient grows linearly, giving ``mu / (intercept + slope * mu)``.
    When the crossing comes from the fitted line the two pieces agree at
    ``crossing_mu``.
    """

    alpha0: float
    slope: float
    intercept: float
    crossing_mu: float


def fit_two_slopes(bids, mus, held, alpha0: float | None = None) -> TwoSlopesParams:
    """Compress per-IO planner bids into TwoSlopesParams.

    Fits inverse coefficients ``mu / bid`` against mu by least squares over
    the held IOs.  ``alpha0`` (the coefficient applied to low-mu IOs) is the
    caller's separation coefficient when given, otherwise the smallest held
    coefficient.  With fewer than two usable held IOs, or a degenerate fit,
    the curve falls back to a constant coefficient.
    """
    bids = np.asarray(bids, dtype=float)
    mus = np.asarray(mus, dtype=float)
    held = np.asarray(held, dtype=bool)
    usable = held & (bids > 0) & (mus > 0)
    hb = bids[usable]
    hm = mus[usable]
    if len(hb) == 0:
        raise InputError("fit_two_slopes needs at least one held IO with a positive bid")
    coeffs = hb / hm
    if alpha0 is None:
        alpha0 = float(np.min(coeffs))

    inv = hm / hb
    spread = float(np.ptp(inv))
    if len(hb) < 2 or spread <= 1e-12 * max(float(np.max(inv)), 1.0) or float(np.ptp(hm)) == 0.0:
        intercept = float(np.mean(inv))
        slope = 0.0
    else:
        design = np.column_stack([np.ones(len(hm)), hm])
        (intercept, slope), *_ = np.linalg.lstsq(design, inv, rcond=None)
        intercept = float(intercept)
        slope = float(slope)

    if slope > 0 and alpha0 > 0:
        crossing = max(0.0, (1.0 / alpha0 - intercept) / slope)
    else:
        slope = max(slope, 0.0)
        crossing = 0.0
    return TwoSlopesParams(alpha0=float(alpha0), slope=slope, intercept=intercept, crossing_mu=crossing)


def curve_from_params(alpha0: float, slope: float, intercept: float) -> TwoSlopesParams:
    """TwoSlopesParams from unconstrained (e.g. learned) parameters.

    Non-positive slopes collapse to the constant-coefficient branch; a
    non-positive intercept with them would make the line meaningless, so the
    curve falls back to plain ``alpha0 * mu``.
    """
    if not (alpha0 > 0) or not math.isfinite(alpha0):
        raise InputError("alpha0 must be positive and finite")
    if slope > 0:
        crossing = max(0.0, (1.0 / alpha0 - intercept) / slope)
        return TwoSlopesParams(alpha0=alpha0, slope=float(slope), intercept=float(intercept), crossing_mu=crossing)
    if intercept > 0:
        return TwoSlopesParams(alpha0=alpha0, slope=0.0, intercept=float(intercept), crossing_mu=0.0)
    return TwoSlopesParams(alpha0=alpha0, slope=0.0, intercept=1.0 / alpha0, crossing_mu=0.0)


def apply_two_slopes(params: TwoSlopesParams, mu) -> np.ndarray:
    """Bid according to the two-piece coefficient curve; always >= 0."""
    mu = np.asarray(mu, dtype=float)
    den = params.intercept + params.slope * mu
    line = np.where(den > 0, mu / np.where(den > 0, den, 1.0), params.alpha0 * mu)
    bids = np.where(mu < params.crossing_mu, params.alpha0 * mu, line)
    return np.maximum(bids, 0.0)


def _alpha0_from_boundary(selection: SelectionSet) -> float:
    """Separation coefficient between accepted and rejected: the midpoint of
    the reciprocal efficiencies on either side of the selection boundary."""
    last_eff = float(selection.efficiency[-1])
    inv_last = 1.0 / last_eff if last_eff > 0 and math.isfinite(last_eff) else 0.0
    nxt = selection.next_efficiency
    if nxt is not None and nxt > 0 and math.isfinite(nxt):
        return 0.5 * (inv_last + 1.0 / nxt)
    return inv_last


def bids_2s(selection: SelectionSet, traffic: StepTraffic, t: int) -> np.ndarray:
    """Two-slopes bids for one step: fit the curve to this step's midpoint
    bids over held IOs, then apply it to every IO of the step."""
    m = len(traffic)
    if len(selection) == 0 or m == 0:
        return np.zeros(m)
    raw = bids_upgrade(selection, traffic, t)
    held = raw > 0
    alpha0 = _alpha0_from_boundary(selection)
    if not held.any():
        return np.maximum(alpha0 * traffic.mu, 0.0)
    params = fit_two_slopes(raw, traffic.mu, held, alpha0=alpha0)
    return apply_two_slopes(params, traffic.mu)


def plan(campaign: CampaignSpec, brief: AdvertiserBrief, mode: str, ranking: Ranking | None = None) -> SelectionSet:
    """Full-campaign selection from a standing start."""
    if ranking is None:
        ranking = rank_items(campaign, mode)
    return select_prefix(ranking, brief.budget, brief.target_cpa)


def replan(
    campaign: CampaignSpec,
    brief: AdvertiserBrief,
    state: EpisodeState,
    mode: str,
    ranking: Ranking | None = None,
) -> np.ndarray:
    """Oracle bids for the step ``state.t``.

    Re-selects over the atoms still biddable at the current step, carrying
    the realized cost and conversions, then synthesizes this step's bids in
    the requested mode.  A zero remaining budget yields all-zero bids.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    t = state.t
    traffic = campaign.traffic(t)
    if ranking is None:
        ranking = rank_items(campaign, mode)
    sel = select_prefix(
        ranking.from_step(t),
        brief.budget,
        brief.target_cpa,
        carried_cost=state.cumulative_cost,
        carried_conversions=float(state.cumulative_conversions),
    )
    if len(sel) == 0:
        return np.zeros(len(traffic))
    if mode == "slot":
        return bids_slot(sel, traffic)
    if mode == "upgrade":
        return bids_upgrade(sel, traffic, t)
    return bids_2s(sel, traffic, t)


def gap_bound(selection: SelectionSet, budget: float) -> float | None:
    """Certified optimality gap of a selection: when its CPA is below the
    target, the unrealized score is at most (selection efficiency) times the
    unspent budget.  Returns None when the bound does not apply (no
    conversions or CPA at/above target)."""
    conv = selection.expected_conversions
    cost = selection.expected_cost
    if conv <= 0:
        return None
    cpa = cost / conv
    if cpa >= selection.target_cpa:
        return None
    eta = conv / cost if cost > 0 else math.inf
    return eta * (budget - cost)


def selection_to_assignment(selection: SelectionSet, campaign: CampaignSpec) -> list[np.ndarray]:
    """Per-step arrays of held slots (0 = none), the neutral assignment form
    scored by the exact solver."""
    assignment = [np.zeros(len(st), dtype=np.int64) for st in campaign.steps]
    big = np.iinfo(np.int64).max
    for t in np.unique(selection.t):
        mask = selection.t == t
        arr = np.full(len(campaign.steps[t - 1]), big)
        np.minimum.at(arr, selection.i[mask], selection.slot[mask])
        assignment[t - 1] = np.where(arr < big, arr, 0)
    return assignment
