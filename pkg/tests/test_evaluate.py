"""Agents, episode evaluation, and the imitation-learning environment."""

import math

import numpy as np
import pytest

from adbid.core import AdvertiserBrief, CampaignSpec, StepTraffic
from adbid.errors import ConfigError, InputError
from adbid.evaluate import (
    BriefSampler,
    ConstantAlphaBidder,
    EpisodeRow,
    EpisodeSpec,
    MetricsReport,
    OilEnv,
    OracleBidder,
    PolicyBidder,
    UPGRADE_INPUT_DIM,
    actions_to_bids,
    alpha_grid_for,
    best_constant_alpha,
    efficient_spend,
    evaluate,
    input_dim_for,
    make_episodes,
    policy_inputs,
    run_episode,
)
from adbid.features import OBSERVATION_DIM
from adbid import oracle
from adbid.auction import new_episode
from adbid.policy import NetConfig, init_params


def one_step_campaign(rows, h=(1.0, 0.8)):
    mu, cb = zip(*rows)
    step = StepTraffic(mu=np.array(mu), sigma=np.zeros(len(mu)), competitor_bids=np.array(cb))
    return CampaignSpec(exposure_probs=h, steps=[step])


TWO_IO = one_step_campaign([(0.1, (1.0, 0.375, 0.125)), (0.04, (1.0, 0.875, 0.25))])
# exposure certain and mu = 1: every outcome is deterministic
DET = one_step_campaign([(1.0, (0.5, 0.25, 0.1))], h=(1.0, 1.0))


def test_input_dims():
    assert input_dim_for("slot") == OBSERVATION_DIM
    assert input_dim_for("2s") == OBSERVATION_DIM
    assert input_dim_for("upgrade") == UPGRADE_INPUT_DIM == OBSERVATION_DIM + 2


def test_constant_alpha_bidder():
    agent = ConstantAlphaBidder(2.5)
    state = new_episode(TWO_IO, AdvertiserBrief(budget=1.0, target_cpa=10.0))
    assert agent.bids(TWO_IO, None, state) == pytest.approx([0.25, 0.1])
    with pytest.raises(InputError):
        ConstantAlphaBidder(-1.0)
    with pytest.raises(InputError):
        ConstantAlphaBidder(math.inf)


def test_oracle_bidder_deterministic_episode():
    with pytest.raises(ConfigError):
        OracleBidder("bogus")
    brief = AdvertiserBrief(budget=0.5, target_cpa=10.0)
    row = run_episode(DET, brief, OracleBidder("upgrade"), seed=0, index=4)
    # score ties between slots resolve to the cheaper prefix: slot 2 at .25
    assert row.cost == pytest.approx(0.25)
    assert row.conversions == 1
    assert row.score == pytest.approx(1.0)
    assert row.cpa == pytest.approx(0.25)
    assert row.spend_frac == pytest.approx(0.5)
    assert row.index == 4


def test_episode_row_dict_and_sentinels():
    row = EpisodeRow(index=0, seed=1, budget=2.0, target_cpa=8.0,
                     cost=1.0, conversions=0, score=0.0)
    assert row.cpa == math.inf
    assert row.as_dict()["cpa"] is None
    assert row.spend_frac == 0.5
    zero = EpisodeRow(index=0, seed=1, budget=0.0, target_cpa=8.0,
                      cost=0.0, conversions=0, score=0.0)
    assert zero.spend_frac == 0.0


def test_actions_to_bids_slot():
    mu = np.array([0.1, 0.2])
    bids = actions_to_bids("slot", np.array([[math.log(2.0)]]), mu)
    assert bids == pytest.approx([0.2, 0.4])
    capped = actions_to_bids("slot", np.array([[1000.0]]), mu)
    assert capped[0] == pytest.approx(math.exp(30.0) * 0.1)


def test_actions_to_bids_2s():
    mu = np.array([0.05, 0.3])
    actions = np.array([[math.log(0.4), 5.0, 2.0]])
    bids = actions_to_bids("2s", actions, mu)
    curve = oracle.curve_from_params(0.4, 5.0, 2.0)
    assert bids == pytest.approx(oracle.apply_two_slopes(curve, mu))
    assert bids[0] == pytest.approx(0.4 * 0.05)     # below the crossing


def test_actions_to_bids_upgrade():
    mu = np.array([0.1, 0.2, 0.3])
    bids = actions_to_bids("upgrade", np.array([[0.5], [-1.0], [2.0]]), mu)
    assert bids == pytest.approx([0.5, 0.0, 2.0])   # negatives clipped
    with pytest.raises(InputError):
        actions_to_bids("upgrade", np.array([[0.5], [1.0]]), mu)


def test_policy_inputs_shapes():
    brief = AdvertiserBrief(budget=1.0, target_cpa=10.0)
    state = new_episode(TWO_IO, brief)
    x = policy_inputs("slot", TWO_IO, brief, state)
    assert x.shape == (1, OBSERVATION_DIM)
    rows = policy_inputs("upgrade", TWO_IO, brief, state)
    assert rows.shape == (2, UPGRADE_INPUT_DIM)
    assert rows[:, OBSERVATION_DIM] == pytest.approx([0.1, 0.04])   # per-IO mu
    assert np.array_equal(rows[0, :OBSERVATION_DIM], rows[1, :OBSERVATION_DIM])


def test_policy_bidder_validates_input_dim():
    params = init_params(NetConfig(input_dim=7, head="slot", hidden=(4,)))
    with pytest.raises(ConfigError):
        PolicyBidder(params)


def test_policy_bidder_runs_untrained():
    params = init_params(NetConfig(input_dim=OBSERVATION_DIM, head="slot", hidden=(8,)))
    brief = AdvertiserBrief(budget=1.0, target_cpa=10.0)
    row = run_episode(TWO_IO, brief, PolicyBidder(params), seed=3)
    assert row.cost <= brief.budget + 1e-12
    assert row.conversions >= 0


def test_metrics_report_summary():
    rows = [
        EpisodeRow(index=0, seed=0, budget=1.0, target_cpa=8.0, cost=0.8,
                   conversions=2, score=1.5),
        EpisodeRow(index=1, seed=1, budget=1.0, target_cpa=8.0, cost=1.0,
                   conversions=0, score=0.0),
        EpisodeRow(index=2, seed=2, budget=2.0, target_cpa=0.3, cost=1.0,
                   conversions=2, score=0.5),
    ]
    s = MetricsReport(rows=rows).summary()
    assert s["episodes"] == 3
    assert s["score_mean"] == pytest.approx(2.0 / 3)
    assert s["spend_frac_mean"] == pytest.approx((0.8 + 1.0 + 0.5) / 3)
    assert s["conversions_mean"] == pytest.approx(4.0 / 3)
    # episode 0 meets its target (cpa .4 <= 8); episode 2 misses (.5 > .3)
    assert s["cpa_within_target"] == 1
    assert s["cpa_defined"] == 2
    lines = MetricsReport(rows=rows).format_lines()
    assert any("cpa within target: 1/2" in line for line in lines)
    empty = MetricsReport().summary()
    assert empty["episodes"] == 0 and empty["score_mean"] == 0.0


def test_evaluate_parallel_matches_serial():
    episodes = make_episodes([TWO_IO, DET], n=6, seed=11)
    agent = OracleBidder("upgrade")
    serial = evaluate(agent, episodes, jobs=1)
    parallel = evaluate(OracleBidder("upgrade"), episodes, jobs=2)
    assert [r.score for r in serial.rows] == pytest.approx([r.score for r in parallel.rows])
    assert [r.index for r in parallel.rows] == list(range(6))


def test_efficient_spend_thresholds():
    # atom efficiencies: .2667, .0457, .0286, .0267
    assert efficient_spend(TWO_IO, 10.0) == pytest.approx(0.3)
    assert efficient_spend(TWO_IO, 30.0) == pytest.approx(1.0)    # adds the .0457 atom
    assert efficient_spend(TWO_IO, 40.0) == pytest.approx(2.0)    # everything
    assert efficient_spend(TWO_IO, 1.0) == 0.0


def test_make_episodes_deterministic():
    a = make_episodes([TWO_IO, DET], n=5, seed=3)
    b = make_episodes([TWO_IO, DET], n=5, seed=3)
    assert [s.seed for s in a] == [s.seed for s in b]
    assert [s.brief.budget for s in a] == [s.brief.budget for s in b]
    assert all(s.campaign is c for s, c in zip(a, [TWO_IO, DET, TWO_IO, DET, TWO_IO]))
    spend = efficient_spend(TWO_IO, 8.0)
    for s in a[::2]:
        assert 0.25 * spend <= s.brief.budget <= 1.0 * spend
        assert 4.0 <= s.brief.target_cpa <= 12.0
    with pytest.raises(InputError):
        make_episodes([], n=3)


def test_alpha_grid_spans_efficiencies():
    grid = alpha_grid_for([TWO_IO], size=12)
    assert len(grid) == 12
    assert np.all(np.diff(grid) > 0)
    assert grid[0] >= 1.0 / 0.27        # cheapest atom's inverse efficiency
    assert grid[-1] <= 1.0 / 0.026
    empty = one_step_campaign([(0.0, (1.0, 0.5, 0.25))])
    with pytest.raises(InputError):
        alpha_grid_for([empty])


def test_best_constant_alpha_picks_winner():
    brief = AdvertiserBrief(budget=0.5, target_cpa=10.0)
    episodes = [EpisodeSpec(campaign=DET, brief=brief, seed=s, index=s) for s in range(2)]
    alpha, report, table = best_constant_alpha(episodes, grid=np.array([0.1, 1.0]))
    assert alpha == 1.0                      # .1 never wins a slot
    assert report.summary()["score_mean"] == pytest.approx(1.0)
    assert table[0] == (0.1, 0.0)


def test_brief_sampler_ranges():
    sampler = BriefSampler(budget_frac=(0.5, 0.5), cpa_range=(6.0, 6.0))
    brief = sampler.sample(2.0, np.random.default_rng(0))
    assert brief.budget == pytest.approx(1.0)
    assert brief.target_cpa == 6.0


class TestOilEnv:
    def make_env(self, mode, budget_frac=(1.0, 1.0)):
        sampler = BriefSampler(budget_frac=budget_frac, cpa_range=(10.0, 10.0),
                               reference_cpa=10.0)
        return OilEnv([TWO_IO], mode, sampler=sampler, seed=5)

    def test_validation(self):
        with pytest.raises(ConfigError):
            OilEnv([TWO_IO], "bogus")
        with pytest.raises(InputError):
            OilEnv([], "slot")

    def test_slot_targets_match_planner_coefficient(self):
        env = self.make_env("slot")
        env.reset()
        assert env.brief.budget == pytest.approx(0.3)    # efficient spend at K=10
        x = env.current_inputs()
        assert x.shape == (1, OBSERVATION_DIM)
        y = env.oracle_targets()
        sel = oracle.select_prefix(env.ranking, env.brief.budget, 10.0)
        assert y[0, 0] == pytest.approx(math.log(oracle.bid_coefficient_slot(sel)))
        done = env.act(y)      # acting on the teacher action is valid
        assert done            # single-step campaign
        summary = env.episode_summary()
        assert summary["episode"] == 0
        assert summary["cost"] <= env.brief.budget + 1e-12

    def test_upgrade_targets_are_midpoint_bids(self):
        env = self.make_env("upgrade", budget_frac=(10.0, 10.0))   # buys everything
        env.reset()
        y = env.oracle_targets()
        sel = oracle.select_prefix(env.ranking, env.brief.budget, 10.0)
        expect = oracle.bids_upgrade(sel, TWO_IO.steps[0], 1)
        assert y[:, 0] == pytest.approx(expect)
        assert env.current_inputs().shape == (2, UPGRADE_INPUT_DIM)

    def test_2s_targets_reproduce_curve(self):
        env = self.make_env("2s", budget_frac=(10.0, 10.0))
        env.reset()
        y = env.oracle_targets()
        alpha0 = math.exp(y[0, 0])
        curve = oracle.curve_from_params(alpha0, y[0, 1], y[0, 2])
        got = oracle.apply_two_slopes(curve, TWO_IO.steps[0].mu)
        sel = oracle.select_prefix(env.ranking, env.brief.budget, 10.0)
        expect = oracle.bids_2s(sel, TWO_IO.steps[0], 1)
        assert got == pytest.approx(expect, rel=1e-9)

    def test_empty_selection_yields_none(self):
        env = self.make_env("slot", budget_frac=(0.0, 0.0))
        env.reset()
        assert env.brief.budget == 0.0
        assert env.oracle_targets() is None
        # the step must still be playable so training can move on
        done = env.act(np.array([[0.0]]))
        assert done
        assert env.episode_summary()["cost"] == 0.0

    def test_degenerate_slot_tie_yields_none(self):
        twin = one_step_campaign([(0.1, (1.0, 0.5, 0.25)), (0.1, (1.0, 0.5, 0.25))])
        sampler = BriefSampler(budget_frac=(0.45 / 0.8, 0.45 / 0.8),
                               cpa_range=(10.0, 10.0), reference_cpa=10.0)
        env = OilEnv([twin], "slot", sampler=sampler, seed=0)
        env.reset()
        assert env.brief.budget == pytest.approx(0.45)
        assert env.oracle_targets() is None

    def test_reset_advances_episode_counter(self):
        env = self.make_env("slot")
        env.reset()
        env.act(np.array([[0.0]]))
        first = env.episode_summary()
        env.reset()
        assert env.episode == 1
        assert first["episode"] == 0
