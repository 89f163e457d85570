"""Exact reference solver for the campaign slot-assignment problem.

Deliberately independent of the greedy planner: it scores assignments from
first principles and, for small instances, enumerates every possible
assignment.  Used to cross-check the planner's selections and bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import CampaignSpec
from .errors import InputError, InstanceTooLargeError

# assignment: one array per step, entry d in {0..D}, 0 = no slot held


@dataclass(frozen=True)
class ObjectiveBreakdown:
    score: float
    expected_cost: float
    expected_conversions: float
    cpa: float  # +inf when there are no conversions


def realized_score(conversions: float, cost: float, target_cpa: float) -> float:
    """Penalized conversions of a finished episode.

    min(1, (K * conv / cost)^2) * conv; zero conversions score 0, and zero
    cost with positive conversions incurs no penalty.
    """
    if conversions <= 0:
        return 0.0
    if cost <= 0:
        return float(conversions)
    ratio = target_cpa * conversions / cost
    return min(1.0, ratio * ratio) * float(conversions)


def objective_value(assignment, campaign: CampaignSpec, target_cpa: float) -> ObjectiveBreakdown:
    """Expected score/cost/conversions of holding the assigned slots."""
    if len(assignment) != campaign.horizon:
        raise InputError(
            f"assignment covers {len(assignment)} steps, campaign has {campaign.horizon}"
        )
    h = campaign.exposure_probs
    d_max = campaign.slot_count
    cost = 0.0
    conv = 0.0
    for st, choices in zip(campaign.steps, assignment):
        choices = np.asarray(choices)
        if len(choices) != len(st):
            raise InputError("assignment row length does not match step traffic")
        if np.any(choices < 0) or np.any(choices > d_max):
            raise InputError(f"slot choices must lie in 0..{d_max}")
        idx = np.flatnonzero(choices)
        if len(idx) == 0:
            continue
        d = choices[idx]
        cost += float(np.sum(st.competitor_bids[idx, d - 1] * h[d - 1]))
        conv += float(np.sum(st.mu[idx] * h[d - 1]))
    score = realized_score(conv, cost, target_cpa)
    cpa = cost / conv if conv > 0 else math.inf
    return ObjectiveBreakdown(score=score, expected_cost=cost, expected_conversions=conv, cpa=cpa)


def brute_force_solve(
    campaign: CampaignSpec,
    budget: float,
    target_cpa: float,
    max_assignments: int = 10**7,
) -> tuple[list[np.ndarray], ObjectiveBreakdown]:
    """Enumerate every assignment of at most one slot per IO and return the
    best budget-feasible one (ties go to the earliest in enumeration order).

    Raises InstanceTooLargeError when (D+1)**N exceeds ``max_assignments``.
    """
    d_max = campaign.slot_count
    n = campaign.total_ios
    base = d_max + 1
    count = base**n
    if count > max_assignments:
        raise InstanceTooLargeError(
            f"(D+1)^N = {count} assignments exceed the cap of {max_assignments}"
        )
    h = campaign.exposure_probs

    # option tables: per flattened IO, cost/conversions of choices 0..D
    cost_tab = np.zeros((n, base))
    conv_tab = np.zeros((n, base))
    io_pos = []
    p = 0
    for t, st in enumerate(campaign.steps, start=1):
        for i in range(len(st)):
            cost_tab[p, 1:] = st.competitor_bids[i, :d_max] * h
            conv_tab[p, 1:] = st.mu[i] * h
            io_pos.append((t, i))
            p += 1

    best_score = -1.0
    best_code = 0
    chunk = 1 << 18
    for lo in range(0, count, chunk):
        hi = min(lo + chunk, count)
        codes = np.arange(lo, hi, dtype=np.int64)
        cost = np.zeros(hi - lo)
        conv = np.zeros(hi - lo)
        scaled = codes
        for p in range(n):
            digit = scaled % base
            cost += cost_tab[p, digit]
            conv += conv_tab[p, digit]
            scaled = scaled // base
        feasible = cost <= budget
        if not feasible.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = target_cpa * conv / cost
            penalty = np.minimum(1.0, ratio * ratio)
        score = np.where(conv > 0, np.where(cost > 0, penalty, 1.0) * conv, 0.0)
        score = np.where(feasible, score, -np.inf)
        k = int(np.argmax(score))
        if score[k] > best_score:
            best_score = float(score[k])
            best_code = lo + k

    assignment = [np.zeros(len(st), dtype=np.int64) for st in campaign.steps]
    scaled = best_code
    for p in range(n):
        digit = scaled % base
        scaled //= base
        if digit:
            t, i = io_pos[p]
            assignment[t - 1][i] = digit
    return assignment, objective_value(assignment, campaign, target_cpa)
