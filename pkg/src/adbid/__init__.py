"""Bid planning and learning for multi-slot second-price ad auctions.

The package splits into campaign data (:mod:`adbid.core`,
:mod:`adbid.traffic`), the auction simulator (:mod:`adbid.auction`), the
hindsight planner and its exact cross-check (:mod:`adbid.oracle`,
:mod:`adbid.exact`), the learned bidding policy (:mod:`adbid.features`,
:mod:`adbid.policy`), evaluation glue (:mod:`adbid.evaluate`), and the
self-check battery (:mod:`adbid.verify`).
"""

from .auction import (
    BidOutcome,
    EpisodeRng,
    EpisodeState,
    StepRecord,
    new_episode,
    resolve_bid,
    step,
)
from .core import (
    AdvertiserBrief,
    CampaignSpec,
    ImpressionOpportunity,
    SlotQuote,
    StepTraffic,
    effective_quantities,
)
from .errors import (
    AdbidError,
    CheckpointError,
    ConfigError,
    DegenerateRankingError,
    EpisodeFinishedError,
    InputError,
    InstanceTooLargeError,
    ParseError,
    TrainingDivergedError,
)
from .evaluate import (
    BriefSampler,
    ConstantAlphaBidder,
    EpisodeSpec,
    MetricsReport,
    OilEnv,
    OracleBidder,
    PolicyBidder,
    best_constant_alpha,
    efficient_spend,
    evaluate,
    make_episodes,
    run_episode,
)
from .exact import ObjectiveBreakdown, brute_force_solve, objective_value, realized_score
from .features import OBSERVATION_DIM, build_observation
from .oracle import (
    MODES,
    Ranking,
    SelectionSet,
    TwoSlopesParams,
    UpgradeItem,
    apply_two_slopes,
    bid_coefficient_slot,
    bids_2s,
    bids_slot,
    bids_upgrade,
    build_upgrade_chain,
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
from .policy import (
    NetConfig,
    PolicyParams,
    TrainConfig,
    forward,
    init_params,
    load_checkpoint,
    offline_train,
    save_checkpoint,
    train_oil,
)
from .traffic import TrafficConfig, generate, load_campaign, save_campaign

__version__ = "0.1.0"
