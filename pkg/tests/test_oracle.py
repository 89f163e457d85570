"""Greedy planner: chains, ranking, prefix selection, and bid synthesis."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adbid.auction import EpisodeState, resolve_bid
from adbid.core import AdvertiserBrief, CampaignSpec, ImpressionOpportunity, StepTraffic
from adbid.errors import ConfigError, DegenerateRankingError, InputError
from adbid.oracle import (
    SelectionSet,
    apply_two_slopes,
    bid_coefficient_slot,
    bids_2s,
    bids_slot,
    bids_upgrade,
    build_upgrade_chain,
    curve_from_params,
    expected_score,
    fit_two_slopes,
    gap_bound,
    plan,
    rank_items,
    replan,
    select_prefix,
    selection_to_assignment,
    slot_efficiency,
    upgrade_efficiency,
)


def one_step_campaign(rows, h=(1.0, 0.8)):
    mu, cb = zip(*rows)
    step = StepTraffic(mu=np.array(mu), sigma=np.zeros(len(mu)), competitor_bids=np.array(cb))
    return CampaignSpec(exposure_probs=h, steps=[step])


# Two IOs, two slots, h = (1.0, 0.8).  Worked by hand:
#   IO0 (mu .1, costs 1.0/.375): acquire slot2 eff .08/.3 = .2667, upgrade eff .02/.7 = .0286
#   IO1 (mu .04, costs 1.0/.875): acquire slot2 eff .032/.7 = .0457, upgrade eff .008/.3 = .0267
TWO_IO = one_step_campaign([(0.1, (1.0, 0.375, 0.125)), (0.04, (1.0, 0.875, 0.25))])
BRIEF = AdvertiserBrief(budget=1.0, target_cpa=10.0)


def test_slot_efficiency():
    assert slot_efficiency(0.1, 0.375) == pytest.approx(0.26666666666666666)
    assert slot_efficiency(0.5, 0.0) == math.inf
    assert slot_efficiency(0.0, 2.0) == 0.0
    with pytest.raises(InputError):
        slot_efficiency(0.1, -1.0)


def test_upgrade_efficiency():
    # moving IO0 from slot 2 to slot 1: dm = .1*(1-.8), dc = 1.0 - .375*.8
    assert upgrade_efficiency(0.1, 1.0, 1.0, 0.375, 0.8) == pytest.approx(0.02 / 0.7)
    assert upgrade_efficiency(0.1, 0.2, 1.0, 0.5, 0.8) == math.inf   # cheaper better slot
    assert upgrade_efficiency(0.1, 1.0, 0.8, 0.5, 0.8) == 0.0        # same exposure


def test_chain_merges_concave_hull():
    # k = (1.0, .9, .5), h = (1, .8, .5): slot-1 upgrade is better than the
    # slot-2 one, so the two merge into a single 3 -> 1 atom at eff 1/15
    io = ImpressionOpportunity(t=1, i=0, mu=0.1, sigma=0.0,
                               competitor_bids=(1.0, 0.9, 0.5, 0.25))
    chain = build_upgrade_chain(io, (1.0, 0.8, 0.5))
    assert [(a.slot, a.source) for a in chain] == [(3, 0), (1, 3)]
    assert chain[0].efficiency == pytest.approx(0.2)
    assert chain[0].delta_cost == pytest.approx(0.25)
    assert chain[1].efficiency == pytest.approx(1.0 / 15.0)
    assert chain[1].delta_cost == pytest.approx(0.75)
    assert chain[1].delta_conv == pytest.approx(0.05)
    with pytest.raises(ConfigError):
        build_upgrade_chain(io, (1.0, 0.8))


def test_merged_efficiency_is_conversion_weighted_harmonic_mean():
    # the merged atom blends the 2->1 upgrade (eff 1/14) and the 3->2 upgrade
    # (eff 3/47) in proportion to their conversion gains: .4 and .6 of .05
    inv = 0.4 * 14.0 + 0.6 * (0.47 / 0.03)
    assert inv == pytest.approx(15.0)
    io = ImpressionOpportunity(t=1, i=0, mu=0.1, sigma=0.0,
                               competitor_bids=(1.0, 0.9, 0.5, 0.25))
    chain = build_upgrade_chain(io, (1.0, 0.8, 0.5))
    assert 1.0 / chain[1].efficiency == pytest.approx(inv)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**31), d=st.integers(1, 6))
def test_chain_properties(seed, d):
    rng = np.random.default_rng(seed)
    cb = tuple(np.sort(rng.uniform(0.01, 2.0, d + 1))[::-1])
    h = np.sort(rng.uniform(0.05, 1.0, d))[::-1]
    io = ImpressionOpportunity(t=1, i=0, mu=float(rng.uniform(0, 1)), sigma=0.0,
                               competitor_bids=cb)
    chain = build_upgrade_chain(io, h)
    effs = [a.efficiency for a in chain]
    assert all(e1 >= e2 for e1, e2 in zip(effs, effs[1:]))
    # atoms chain from scratch to slot 1 without gaps
    assert chain[0].source == 0
    assert chain[-1].slot == 1
    for prev, nxt in zip(chain, chain[1:]):
        assert nxt.source == prev.slot
        assert nxt.slot < prev.slot
    # totals equal holding slot 1 outright
    assert sum(a.delta_cost for a in chain) == pytest.approx(cb[0] * h[0], rel=1e-12)
    assert sum(a.delta_conv for a in chain) == pytest.approx(io.mu * h[0], rel=1e-12, abs=1e-15)


def test_rank_items_upgrade_order():
    r = rank_items(TWO_IO, "upgrade")
    assert r.efficiency == pytest.approx([0.08 / 0.3, 0.032 / 0.7, 0.02 / 0.7, 0.008 / 0.3])
    assert r.i.tolist() == [0, 1, 0, 1]
    assert r.slot.tolist() == [2, 2, 1, 1]
    assert r.source.tolist() == [0, 0, 2, 2]
    assert rank_items(TWO_IO, "2s").efficiency.tolist() == r.efficiency.tolist()
    with pytest.raises(ConfigError):
        rank_items(TWO_IO, "nope")


def test_rank_items_slot_order():
    r = rank_items(TWO_IO, "slot")
    assert r.efficiency == pytest.approx([0.08 / 0.3, 0.1, 0.032 / 0.7, 0.04])
    assert r.i.tolist() == [0, 0, 1, 1]
    assert r.slot.tolist() == [2, 1, 2, 1]
    # marginal quantities telescope: IO0 rows sum to the slot-1 holding
    assert r.delta_cost[:2].sum() == pytest.approx(1.0)
    assert r.delta_conv[:2].sum() == pytest.approx(0.1)


def test_rank_items_tie_break():
    # identical atoms across steps and IOs: ties resolve by (t, i) ascending,
    # then deeper slot first so prefixes stay realizable
    def step(n):
        # tied costs put both slots of every IO at efficiency .1
        return StepTraffic(mu=np.full(n, 0.1), sigma=np.zeros(n),
                           competitor_bids=np.tile([1.0, 1.0, 0.5], (n, 1)))

    campaign = CampaignSpec(exposure_probs=(1.0, 0.8), steps=[step(2), step(1)])
    r = rank_items(campaign, "slot")
    key = list(zip(r.t.tolist(), r.i.tolist(), r.slot.tolist()))
    assert key == [(1, 0, 2), (1, 0, 1), (1, 1, 2), (1, 1, 1), (2, 0, 2), (2, 0, 1)]


def test_ranking_from_step_filters():
    step = StepTraffic(mu=np.array([0.1]), sigma=np.zeros(1),
                       competitor_bids=np.array([[1.0, 0.5, 0.25]]))
    campaign = CampaignSpec(exposure_probs=(1.0, 0.8), steps=[step, step, step])
    r = rank_items(campaign, "upgrade")
    assert sorted(set(r.t.tolist())) == [1, 2, 3]
    r2 = r.from_step(2)
    assert sorted(set(r2.t.tolist())) == [2, 3]
    assert r.from_step(1) is r
    assert len(r.from_step(4)) == 0


def test_expected_score_penalty():
    assert expected_score(10.0, 160.0, 8.0) == pytest.approx(2.5)
    assert expected_score(0.112, 1.0, 10.0) == pytest.approx(0.112)
    assert expected_score(0.0, 1.0, 10.0) == 0.0
    assert expected_score(0.5, 0.0, 10.0) == 0.5


def test_plan_upgrade_two_io():
    sel = plan(TWO_IO, BRIEF, "upgrade")
    assert sel.held_slots() == {(1, 0): 2, (1, 1): 2}
    assert sel.expected_cost == pytest.approx(1.0)
    assert sel.expected_conversions == pytest.approx(0.112)
    assert sel.score == pytest.approx(0.112)
    assert sel.next_efficiency == pytest.approx(0.02 / 0.7)
    assert sel.planned_cost == sel.expected_cost   # nothing carried


def test_plan_slot_two_io():
    sel = plan(TWO_IO, BRIEF, "slot")
    assert sel.held_slots() == {(1, 0): 1}
    assert sel.expected_cost == pytest.approx(1.0)
    assert sel.expected_conversions == pytest.approx(0.1)
    assert sel.score == pytest.approx(0.1)


def test_select_prefix_prefers_shorter_on_budget_cut():
    # tight budget keeps only the first atom
    sel = select_prefix(rank_items(TWO_IO, "upgrade"), 0.5, 10.0)
    assert sel.held_slots() == {(1, 0): 2}
    assert sel.expected_cost == pytest.approx(0.3)
    assert sel.score == pytest.approx(0.08)


def test_select_prefix_empty_prefix_can_win():
    # carried totals already score 1.0; adding the available atoms would
    # dilute the CPA below the penalty threshold and lose score
    ranking = rank_items(TWO_IO, "upgrade")
    sel = select_prefix(ranking, 100.0, 0.5, carried_cost=0.4, carried_conversions=1.0)
    assert len(sel) == 0
    assert sel.score == pytest.approx(1.0)
    assert sel.expected_cost == 0.4
    assert sel.expected_conversions == 1.0


def test_select_prefix_penalty_tradeoff():
    # with a loose CPA target the planner keeps buying past the penalty knee
    # only while the squared-ratio penalty is worth it
    sel_tight = select_prefix(rank_items(TWO_IO, "upgrade"), 1.0, 3.0)
    # at K=3: prefix1 score = .08 (cpa 3.75 penalized: (3*.08/.3)^2 = .64 -> .0512)
    # prefix2 cpa 8.93 -> penalty (3*.112)^2 = .112896 -> .01264
    assert sel_tight.expected_cost == pytest.approx(0.3)
    assert sel_tight.score == pytest.approx(0.64 * 0.08)


def test_select_prefix_validates_inputs():
    ranking = rank_items(TWO_IO, "upgrade")
    with pytest.raises(InputError):
        select_prefix(ranking, -1.0, 10.0)
    with pytest.raises(InputError):
        select_prefix(ranking, math.inf, 10.0)
    with pytest.raises(InputError):
        select_prefix(ranking, 1.0, 0.0)


def test_select_prefix_budget_monotone():
    ranking = rank_items(TWO_IO, "upgrade")
    scores = [select_prefix(ranking, b, 10.0).score for b in np.linspace(0.0, 2.0, 41)]
    assert all(s2 >= s1 - 1e-15 for s1, s2 in zip(scores, scores[1:]))


def test_bid_coefficient_slot_margin():
    sel = plan(TWO_IO, BRIEF, "slot")
    alpha = bid_coefficient_slot(sel)
    assert alpha == pytest.approx(10.0, rel=1e-9)
    assert alpha > 10.0    # margin keeps the marginal slot
    bids = bids_slot(sel, TWO_IO.steps[0])
    assert resolve_bid(bids[0], TWO_IO.steps[0].competitor_bids[0])[:2] == (True, 1)
    assert resolve_bid(bids[1], TWO_IO.steps[0].competitor_bids[1])[0] is False
    with pytest.raises(ConfigError):
        bid_coefficient_slot(plan(TWO_IO, BRIEF, "upgrade"))


def test_bid_coefficient_zero_for_empty_selection():
    sel = select_prefix(rank_items(TWO_IO, "slot"), 0.0, 10.0)
    assert len(sel) == 0
    assert bid_coefficient_slot(sel) == 0.0


def test_bid_coefficient_degenerate_tie():
    # two identical IOs with the budget cutting between them cannot be
    # separated by one coefficient
    campaign = one_step_campaign([(0.1, (1.0, 0.5, 0.25)), (0.1, (1.0, 0.5, 0.25))])
    sel = select_prefix(rank_items(campaign, "slot"), 0.45, 10.0)
    assert len(sel) == 1
    with pytest.raises(DegenerateRankingError):
        bid_coefficient_slot(sel)


def test_bids_upgrade_midpoints():
    sel = plan(TWO_IO, BRIEF, "upgrade")
    bids = bids_upgrade(sel, TWO_IO.steps[0], 1)
    assert bids == pytest.approx([(0.375 + 1.0) / 2, (0.875 + 1.0) / 2])
    for i in range(2):
        won, slot, _ = resolve_bid(bids[i], TWO_IO.steps[0].competitor_bids[i])
        assert (won, slot) == (True, 2)


def test_bids_upgrade_top_slot_doubles():
    campaign = one_step_campaign([(0.5, (1.0, 0.375, 0.125))])
    sel = plan(campaign, AdvertiserBrief(budget=10.0, target_cpa=10.0), "upgrade")
    assert sel.held_slots() == {(1, 0): 1}
    bids = bids_upgrade(sel, campaign.steps[0], 1)
    assert bids[0] == pytest.approx(0.5 * (1.0 + 2.0))   # k0 = 2 k1
    assert resolve_bid(bids[0], (1.0, 0.375, 0.125))[:2] == (True, 1)


def test_bids_upgrade_unheld_zero():
    sel = select_prefix(rank_items(TWO_IO, "upgrade"), 0.5, 10.0)
    bids = bids_upgrade(sel, TWO_IO.steps[0], 1)
    assert bids[1] == 0.0


def test_fit_two_slopes_exact_line():
    # inverse coefficients lie exactly on 2 + 5 mu
    mus = np.array([0.1, 0.2, 0.3, 0.4])
    bids = mus / (2.0 + 5.0 * mus)
    params = fit_two_slopes(bids, mus, np.ones(4, dtype=bool), alpha0=0.4)
    assert params.slope == pytest.approx(5.0, rel=1e-9)
    assert params.intercept == pytest.approx(2.0, rel=1e-9)
    assert params.crossing_mu == pytest.approx(0.1, rel=1e-9)
    out = apply_two_slopes(params, np.array([0.05, 0.1, 0.3]))
    assert out[0] == pytest.approx(0.4 * 0.05)             # below crossing
    assert out[1] == pytest.approx(0.1 / 2.5)              # continuous at it
    assert out[2] == pytest.approx(0.3 / 3.5)


def test_fit_two_slopes_fallbacks():
    one = fit_two_slopes([0.5], [0.1], [True])
    assert one.slope == 0.0
    assert one.intercept == pytest.approx(0.2)     # mu / bid
    assert apply_two_slopes(one, 0.3) == pytest.approx(1.5)
    with pytest.raises(InputError):
        fit_two_slopes([0.0], [0.1], [True])
    const_mu = fit_two_slopes([0.5, 0.5], [0.1, 0.1], [True, True])
    assert const_mu.slope == 0.0


def test_curve_from_params_branches():
    c = curve_from_params(0.4, 5.0, 2.0)
    assert c.crossing_mu == pytest.approx(0.1)
    flat = curve_from_params(0.4, -1.0, 2.0)
    assert flat.slope == 0.0 and flat.crossing_mu == 0.0
    assert apply_two_slopes(flat, 0.2) == pytest.approx(0.1)
    degenerate = curve_from_params(0.4, -1.0, -3.0)
    assert degenerate.intercept == pytest.approx(2.5)      # 1 / alpha0
    assert apply_two_slopes(degenerate, 0.2) == pytest.approx(0.4 * 0.2)
    with pytest.raises(InputError):
        curve_from_params(0.0, 1.0, 1.0)
    with pytest.raises(InputError):
        curve_from_params(math.nan, 1.0, 1.0)


def test_bids_2s_reproduces_midpoints_on_two_holdings():
    # with two held IOs the least-squares line interpolates both inverse
    # coefficients, so the curve returns the exact midpoint bids
    sel = plan(TWO_IO, BRIEF, "2s")
    bids = bids_2s(sel, TWO_IO.steps[0], 1)
    assert bids == pytest.approx([0.6875, 0.9375], rel=1e-9)
    for i in range(2):
        won, slot, _ = resolve_bid(bids[i], TWO_IO.steps[0].competitor_bids[i])
        assert (won, slot) == (True, 2)


def test_bids_2s_empty_selection_is_zero():
    sel = select_prefix(rank_items(TWO_IO, "upgrade"), 0.0, 10.0)
    assert bids_2s(sel, TWO_IO.steps[0], 1).tolist() == [0.0, 0.0]


def test_replan_carries_realized_totals():
    steps = [
        StepTraffic(mu=np.array([0.1]), sigma=np.zeros(1),
                    competitor_bids=np.array([[1.0, 0.375, 0.125]])),
        StepTraffic(mu=np.array([0.04]), sigma=np.zeros(1),
                    competitor_bids=np.array([[1.0, 0.875, 0.25]])),
    ]
    campaign = CampaignSpec(exposure_probs=(1.0, 0.8), steps=steps)
    state = EpisodeState(t=2, remaining_budget=0.7, cumulative_cost=0.3)
    bids = replan(campaign, BRIEF, state, "upgrade")
    # remaining budget .7 buys the step-2 acquisition (cost .7) exactly
    assert bids == pytest.approx([(0.875 + 1.0) / 2])

    # an exhausted budget yields zero bids
    broke = EpisodeState(t=2, remaining_budget=0.0, cumulative_cost=1.0)
    assert replan(campaign, BRIEF, broke, "upgrade").tolist() == [0.0]
    with pytest.raises(ConfigError):
        replan(campaign, BRIEF, state, "nope")


def make_selection(cost, conv, target_cpa, budget=1.0):
    e = np.empty(0)
    ei = np.empty(0, dtype=np.int32)
    return SelectionSet(
        mode="upgrade", budget=budget, target_cpa=target_cpa,
        carried_cost=0.0, carried_conversions=0.0,
        t=ei, i=ei, slot=ei, source=ei,
        delta_cost=e, delta_conv=e, efficiency=e,
        expected_cost=cost, expected_conversions=conv, score=0.0,
    )


def test_gap_bound_values():
    # spend .9 of 1.0 at eta = .112/.9: headroom .1 bounds the missed score
    sel = make_selection(0.9, 0.112, 10.0)
    assert gap_bound(sel, 1.0) == pytest.approx(0.1 * 0.112 / 0.9)
    assert gap_bound(make_selection(1.0, 0.112, 10.0), 1.0) == pytest.approx(0.0)
    assert gap_bound(make_selection(0.9, 0.0, 10.0), 1.0) is None     # no conversions
    assert gap_bound(make_selection(1.2, 0.1, 10.0), 1.5) is None     # cpa over target


def test_selection_to_assignment():
    upgrade = selection_to_assignment(plan(TWO_IO, BRIEF, "upgrade"), TWO_IO)
    assert [a.tolist() for a in upgrade] == [[2, 2]]
    slot = selection_to_assignment(plan(TWO_IO, BRIEF, "slot"), TWO_IO)
    assert [a.tolist() for a in slot] == [[1, 0]]


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31), budget=st.floats(0.0, 4.0),
       mode=st.sampled_from(["slot", "upgrade"]))
def test_select_prefix_properties(seed, budget, mode):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 7))
    mu = rng.uniform(0.0, 1.0, m)
    cb = np.sort(rng.uniform(0.05, 2.0, (m, 4)), axis=1)[:, ::-1]
    campaign = CampaignSpec(
        exposure_probs=(1.0, 0.7, 0.4),
        steps=[StepTraffic(mu=mu, sigma=np.zeros(m), competitor_bids=cb)],
    )
    sel = select_prefix(rank_items(campaign, mode), budget, 8.0)
    assert sel.expected_cost <= budget + 1e-12
    assert sel.score >= -1e-15
    assert sel.score == pytest.approx(
        expected_score(sel.expected_conversions, sel.expected_cost, 8.0), rel=1e-12, abs=1e-15
    )
    # each held slot's selected atoms telescope to the holding's totals
    held = sel.held_slots()
    h = campaign.exposure_probs
    exp_cost = sum(cb[i, d - 1] * h[d - 1] for (_, i), d in held.items())
    exp_conv = sum(mu[i] * h[d - 1] for (_, i), d in held.items())
    assert sel.expected_cost == pytest.approx(exp_cost, rel=1e-9, abs=1e-12)
    assert sel.expected_conversions == pytest.approx(exp_conv, rel=1e-9, abs=1e-12)
