"""Domain types for multi-slot second-price bidding campaigns.

Conventions used throughout the package:

* Steps ``t`` run 1..T.  Impression opportunities (IOs) within a step are
  indexed by row ``i`` starting at 0.
* Slots ``d`` run 1..D with slot 1 the most visible.  ``exposure_probs[d-1]``
  is the probability ``h_d`` that a win at slot d is actually exposed, and it
  is non-increasing in d.
* ``competitor_bids`` holds the top D+1 competitor bids in descending order.
  When the agent's bid ranks d-th among all bids it wins slot d and pays the
  d-th highest competitor bid, i.e. ``competitor_bids[d-1]``.  The last entry
  (the (D+1)-th highest bid) is the least winning cost of the auction as it
  would clear without the agent; it never prices the agent's win but is
  observable and used as a feature.
* The effective (expected) cost of holding slot d is ``k_d * h_d`` and the
  effective conversions are ``mu * h_d``: price is charged and conversions
  can happen only on exposure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError


@dataclass(frozen=True)
class AdvertiserBrief:
    """Per-episode contract: a budget and a target cost per acquisition."""

    budget: float
    target_cpa: float

    def __post_init__(self):
        if not (math.isfinite(self.budget) and self.budget >= 0):
            raise ConfigError(f"budget must be finite and >= 0, got {self.budget}")
        if not (math.isfinite(self.target_cpa) and self.target_cpa > 0):
            raise ConfigError(f"target_cpa must be finite and > 0, got {self.target_cpa}")


@dataclass(frozen=True)
class ImpressionOpportunity:
    """One auctioned impression: conversion-probability estimate and the
    competing bid landscape.

    ``competitor_bids`` must be descending with D+1 entries for a D-slot
    auction.
    """

    t: int
    i: int
    mu: float
    sigma: float
    competitor_bids: tuple[float, ...]

    def __post_init__(self):
        if not (0.0 <= self.mu <= 1.0):
            raise InputError(f"mu must lie in [0, 1], got {self.mu}")
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise InputError(f"sigma must be finite and >= 0, got {self.sigma}")
        if len(self.competitor_bids) < 2:
            raise InputError("competitor_bids needs at least 2 entries (one slot plus the trailing bid)")
        prev = math.inf
        for b in self.competitor_bids:
            if not (math.isfinite(b) and b >= 0):
                raise InputError(f"competitor bids must be finite and >= 0, got {b}")
            if b > prev:
                raise InputError(f"competitor_bids must be sorted descending, got {self.competitor_bids}")
            prev = b

    @property
    def slot_count(self) -> int:
        return len(self.competitor_bids) - 1

    def slot_cost(self, slot: int) -> float:
        """Price paid when the agent's bid ranks ``slot``-th."""
        return self.competitor_bids[slot - 1]


@dataclass(frozen=True)
class SlotQuote:
    """Effective cost/value of one slot of one IO."""

    t: int
    i: int
    slot: int
    raw_cost: float   # k_d, paid on exposure
    eff_cost: float   # k_d * h_d
    eff_conv: float   # mu * h_d


def effective_quantities(io: ImpressionOpportunity, exposure_probs) -> list[SlotQuote]:
    """Quote every slot of ``io`` at its exposure-discounted cost and value.

    Raises ConfigError when ``exposure_probs`` does not match the bid vector
    (it must have one entry fewer than ``competitor_bids``).
    """
    h = np.asarray(exposure_probs, dtype=float)
    if h.ndim != 1 or len(h) != io.slot_count:
        raise ConfigError(
            f"exposure_probs has {h.size} entries but competitor_bids implies {io.slot_count} slots"
        )
    quotes = []
    for d in range(1, io.slot_count + 1):
        k = io.competitor_bids[d - 1]
        quotes.append(
            SlotQuote(
                t=io.t,
                i=io.i,
                slot=d,
                raw_cost=k,
                eff_cost=k * h[d - 1],
                eff_conv=io.mu * h[d - 1],
            )
        )
    return quotes


@dataclass
class StepTraffic:
    """All IOs auctioned during one step, stored columnwise.

    ``competitor_bids`` has shape (M, D+1) with descending rows.
    """

    mu: np.ndarray
    sigma: np.ndarray
    competitor_bids: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.competitor_bids = np.asarray(self.competitor_bids, dtype=float)
        if self.competitor_bids.ndim != 2:
            raise InputError("competitor_bids must be a 2-D array")
        m = len(self.mu)
        if len(self.sigma) != m or len(self.competitor_bids) != m:
            raise InputError("mu, sigma and competitor_bids must have matching lengths")

    def __len__(self) -> int:
        return len(self.mu)

    @property
    def lwc(self) -> np.ndarray:
        """Least winning cost per IO: the (D+1)-th highest competitor bid."""
        return self.competitor_bids[:, -1]


@dataclass
class CampaignSpec:
    """A full campaign: exposure curve plus traffic for every step."""

    exposure_probs: np.ndarray
    steps: list[StepTraffic]
    category: int = 0
    flags: list[str] = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        self.exposure_probs = np.asarray(self.exposure_probs, dtype=float)
        if self.exposure_probs.ndim != 1 or len(self.exposure_probs) == 0:
            raise ConfigError("exposure_probs must be a non-empty 1-D array")
        if np.any(self.exposure_probs <= 0) or np.any(self.exposure_probs > 1):
            raise ConfigError("exposure probabilities must lie in (0, 1]")
        if np.any(np.diff(self.exposure_probs) > 0):
            raise ConfigError("exposure probabilities must be non-increasing in slot index")
        d = self.slot_count
        for idx, st in enumerate(self.steps):
            if st.competitor_bids.shape[1] != d + 1:
                raise ConfigError(
                    f"step {idx + 1}: competitor_bids has {st.competitor_bids.shape[1]} columns, expected {d + 1}"
                )
        self.flags = self._scan_flags()

    def _scan_flags(self) -> list[str]:
        """Validate traffic rows; hard violations raise, soft ones are flagged.

        Rows must be descending and non-negative.  Ties between consecutive
        bids are accepted but flagged: downstream ranking relies on strictly
        decreasing cost discounts and resolves ties deterministically.
        """
        flags = []
        for idx, st in enumerate(self.steps):
            cb = st.competitor_bids
            if len(st) == 0:
                continue
            if np.any(cb < 0) or not np.all(np.isfinite(cb)):
                raise InputError(f"step {idx + 1}: competitor bids must be finite and >= 0")
            diffs = np.diff(cb, axis=1)
            if np.any(diffs > 0):
                raise InputError(f"step {idx + 1}: competitor bids must be sorted descending")
            if np.any(diffs == 0):
                flags.append(f"step {idx + 1}: tied competitor bids (cost discounts not strictly decreasing)")
            if np.any(st.mu < 0) or np.any(st.mu > 1):
                raise InputError(f"step {idx + 1}: mu must lie in [0, 1]")
            if np.any(st.sigma < 0):
                raise InputError(f"step {idx + 1}: sigma must be >= 0")
        return flags

    @property
    def horizon(self) -> int:
        return len(self.steps)

    @property
    def slot_count(self) -> int:
        return len(self.exposure_probs)

    @property
    def total_ios(self) -> int:
        return sum(len(st) for st in self.steps)

    def traffic(self, t: int) -> StepTraffic:
        """Traffic for 1-based step ``t``."""
        if not 1 <= t <= self.horizon:
            raise InputError(f"step {t} outside 1..{self.horizon}")
        return self.steps[t - 1]

    def io(self, t: int, i: int) -> ImpressionOpportunity:
        st = self.traffic(t)
        return ImpressionOpportunity(
            t=t,
            i=i,
            mu=float(st.mu[i]),
            sigma=float(st.sigma[i]),
            competitor_bids=tuple(float(x) for x in st.competitor_bids[i]),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, CampaignSpec):
            return NotImplemented
        if self.category != other.category or self.horizon != other.horizon:
            return False
        if not np.array_equal(self.exposure_probs, other.exposure_probs):
            return False
        for a, b in zip(self.steps, other.steps):
            if not (
                np.array_equal(a.mu, b.mu)
                and np.array_equal(a.sigma, b.sigma)
                and np.array_equal(a.competitor_bids, b.competitor_bids)
            ):
                return False
        return True
