"""Game-theoretic hop selection: policies, rewards, baselines, and oracles."""

from .baselines import EpsGreedyBandit, assignment_value, opt_assignment
from .episode import EpisodeStats, play_round, run_episode
from .multicast import MAX_BASE_HOPS, group_reward, lift_engine, subset_choices
from .policy import (
    EpisodeUpdate,
    GameConfig,
    PolicyEngine,
    apply_floor,
    candidate_set,
    correlation_matrix,
    determinant,
    exploration_policy,
    grid_size,
    simplex_grid,
    solve,
    theory_schedule,
)
from .regret import (
    best_fixed_candidate,
    deviation_values,
    enumerate_deviation_values,
    enumerate_nash_gap,
    enumerate_total_reward,
    episode_regret,
    expected_total_reward,
    mc_total_reward,
    nash_gap,
    symmetric_candidate_reward,
)
from .rewards import RewardModel

__all__ = [
    "EpisodeStats",
    "EpisodeUpdate",
    "EpsGreedyBandit",
    "GameConfig",
    "MAX_BASE_HOPS",
    "PolicyEngine",
    "RewardModel",
    "apply_floor",
    "assignment_value",
    "best_fixed_candidate",
    "candidate_set",
    "correlation_matrix",
    "determinant",
    "deviation_values",
    "enumerate_deviation_values",
    "enumerate_nash_gap",
    "enumerate_total_reward",
    "episode_regret",
    "expected_total_reward",
    "exploration_policy",
    "nash_gap",
    "grid_size",
    "group_reward",
    "lift_engine",
    "mc_total_reward",
    "opt_assignment",
    "play_round",
    "run_episode",
    "simplex_grid",
    "solve",
    "subset_choices",
    "symmetric_candidate_reward",
    "theory_schedule",
]
