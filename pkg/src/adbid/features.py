"""Real-time observation features for the bidding policy.

Every feature is computable by the bidder mid-episode: contract quantities,
aggregates of its own bid history and outcomes, the revealed least winning
costs (LWC, the (D+1)-th highest competitor bid of a past IO), and summary
statistics of the current step's conversion probabilities.

History aggregates come in three windows: the whole episode so far, the last
step, and the last three steps.  Aggregates with no data are reported as 0
(including CPA before the first conversion).  Percentiles interpolate
linearly between order statistics; beyond ``PERCENTILE_CAP`` values they are
computed on an evenly strided subsample per step for speed.
"""

from __future__ import annotations

import numpy as np

from .auction import EpisodeState, StepRecord
from .core import AdvertiserBrief, StepTraffic

OBSERVATION_DIM = 60
PERCENTILE_CAP = 8192

FEATURE_NAMES = [
    "time_left_frac", "budget_remaining", "budget_total", "current_cpa", "category",
    "mean_bid_all", "mean_bid_last", "mean_bid_last3",
    "mean_lwc_all", "mean_lwc_last", "mean_lwc_last3",
    "p10_lwc_all", "p10_lwc_last", "p10_lwc_last3",
    "p1_lwc_all", "p1_lwc_last", "p1_lwc_last3",
    "mean_pvalue_all", "conversion_rate_all", "bid_success_rate_all",
    "mean_pvalue_last", "mean_pvalue_last3",
    "conversion_rate_last", "conversion_rate_last3",
    "bid_success_rate_last", "bid_success_rate_last3",
    "mean_win_slot_all", "mean_win_slot_last", "mean_win_slot_last3",
    "mean_cost_all", "mean_cost_last", "mean_cost_last3",
    "mean_cost_slot1_all", "mean_cost_slot1_last", "mean_cost_slot1_last3",
    "mean_cost_slot2_all", "mean_cost_slot2_last", "mean_cost_slot2_last3",
    "mean_cost_slot3_all", "mean_cost_slot3_last", "mean_cost_slot3_last3",
    "mean_bid_over_lwc_all", "mean_bid_over_lwc_last", "mean_bid_over_lwc_last3",
    "mean_pvalue_over_lwc_all", "mean_pvalue_over_lwc_last", "mean_pvalue_over_lwc_last3",
    "p90_pvalue_over_lwc_all", "p90_pvalue_over_lwc_last", "p90_pvalue_over_lwc_last3",
    "p99_pvalue_over_lwc_all", "p99_pvalue_over_lwc_last", "p99_pvalue_over_lwc_last3",
    "mean_current_pvalue", "p90_current_pvalue", "p99_current_pvalue",
    "current_io_count", "last_io_count", "last3_io_count", "total_io_count",
]


class _RecordStats:
    """Per-step scalar aggregates, cached on the record."""

    __slots__ = (
        "n", "bid_sum", "lwc_sum", "mu_sum", "wins", "conversions",
        "slot_sum", "cost_sum", "slot_wins", "slot_cost",
        "ratio_n", "bid_lwc_sum", "mu_lwc_sum", "lwc", "mu_over_lwc",
    )

    def __init__(self, rec: StepRecord):
        self.n = len(rec)
        self.bid_sum = float(rec.bids.sum())
        self.lwc_sum = float(rec.lwc.sum())
        self.mu_sum = float(rec.mu.sum())
        won = rec.won
        self.wins = int(won.sum())
        self.conversions = int(rec.converted.sum())
        self.slot_sum = float(rec.slot.sum())        # slot is 0 unless won
        self.cost_sum = float(rec.price.sum())
        self.slot_wins = np.zeros(3)
        self.slot_cost = np.zeros(3)
        for d in (1, 2, 3):
            mask = rec.slot == d
            self.slot_wins[d - 1] = mask.sum()
            self.slot_cost[d - 1] = rec.price[mask].sum()
        pos = rec.lwc > 0
        self.ratio_n = int(pos.sum())
        lwc_pos = rec.lwc[pos]
        self.bid_lwc_sum = float((rec.bids[pos] / lwc_pos).sum()) if self.ratio_n else 0.0
        self.mu_lwc_sum = float((rec.mu[pos] / lwc_pos).sum()) if self.ratio_n else 0.0
        self.lwc = rec.lwc
        self.mu_over_lwc = rec.mu[pos] / lwc_pos if self.ratio_n else np.empty(0)


def _stats(rec: StepRecord) -> _RecordStats:
    cached = getattr(rec, "_feature_stats", None)
    if cached is None:
        cached = _RecordStats(rec)
        rec._feature_stats = cached
    return cached


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def _strided_concat(arrays: list[np.ndarray], total: int) -> np.ndarray:
    if total <= PERCENTILE_CAP:
        if not arrays:
            return np.empty(0)
        return np.concatenate(arrays) if len(arrays) > 1 else arrays[0]
    stride = -(-total // PERCENTILE_CAP)  # ceil
    return np.concatenate([a[::stride] for a in arrays])


def _percentiles(arrays: list[np.ndarray], total: int, qs) -> np.ndarray:
    data = _strided_concat([a for a in arrays if len(a)], total)
    if len(data) == 0:
        return np.zeros(len(qs))
    return np.percentile(data, qs)


def build_observation(
    state: EpisodeState,
    current: StepTraffic,
    brief: AdvertiserBrief,
    horizon: int,
    category: float = 0.0,
) -> np.ndarray:
    """The 60-dimensional observation for the step ``state.t``."""
    obs = np.zeros(OBSERVATION_DIM)
    t = state.t
    obs[0] = (horizon - t + 1) / horizon
    obs[1] = state.remaining_budget
    obs[2] = brief.budget
    obs[3] = _safe_div(state.cumulative_cost, state.cumulative_conversions)
    obs[4] = category

    hist = state.history
    windows = (hist, hist[-1:], hist[-3:])
    for w, recs in enumerate(windows):
        st = [_stats(r) for r in recs]
        n = sum(s.n for s in st)
        wins = sum(s.wins for s in st)
        obs[5 + w] = _safe_div(sum(s.bid_sum for s in st), n)
        obs[8 + w] = _safe_div(sum(s.lwc_sum for s in st), n)
        lwc_arrays = [s.lwc for s in st]
        obs[11 + w], obs[14 + w] = _percentiles(lwc_arrays, n, (10.0, 1.0))
        obs[26 + w] = _safe_div(sum(s.slot_sum for s in st), wins)
        obs[29 + w] = _safe_div(sum(s.cost_sum for s in st), wins)
        slot_wins = sum((s.slot_wins for s in st), np.zeros(3))
        slot_cost = sum((s.slot_cost for s in st), np.zeros(3))
        for d in range(3):
            obs[32 + 3 * d + w] = _safe_div(slot_cost[d], slot_wins[d])
        ratio_n = sum(s.ratio_n for s in st)
        obs[41 + w] = _safe_div(sum(s.bid_lwc_sum for s in st), ratio_n)
        obs[44 + w] = _safe_div(sum(s.mu_lwc_sum for s in st), ratio_n)
        ratio_arrays = [s.mu_over_lwc for s in st]
        obs[47 + w], obs[50 + w] = _percentiles(ratio_arrays, ratio_n, (90.0, 99.0))

        mu_sum = sum(s.mu_sum for s in st)
        conv = sum(s.conversions for s in st)
        if w == 0:
            obs[17] = _safe_div(mu_sum, n)
            obs[18] = _safe_div(conv, wins)
            obs[19] = _safe_div(wins, n)
        elif w == 1:
            obs[20] = _safe_div(mu_sum, n)
            obs[22] = _safe_div(conv, wins)
            obs[24] = _safe_div(wins, n)
            obs[57] = n
        else:
            obs[21] = _safe_div(mu_sum, n)
            obs[23] = _safe_div(conv, wins)
            obs[25] = _safe_div(wins, n)
            obs[58] = n

    m = len(current)
    if m:
        obs[53] = float(current.mu.mean())
        obs[54], obs[55] = _percentiles([current.mu], m, (90.0, 99.0))
    obs[56] = m
    obs[59] = m + sum(len(r) for r in hist)
    return obs
