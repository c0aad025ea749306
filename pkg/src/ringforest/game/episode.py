"""Multi-agent episode driver.

Every round each agent samples a choice from its own distribution; the load
on a choice is the number of agents that picked it that round, and rewards
are drawn from the shared congestion model.  Episodes end with one policy
update per agent.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

from ..errors import ConfigError
from .policy import EpisodeUpdate, PolicyEngine
from .rewards import RewardModel


@dataclass
class EpisodeStats:
    rounds: int
    total_reward: float
    per_agent_reward: list[float]
    selection_counts: list[list[int]]  # [agent][choice]
    updates: list[EpisodeUpdate] = field(default_factory=list)


def play_round(
    engines: Sequence[PolicyEngine], model: RewardModel, rng
) -> tuple[list[int], list[float]]:
    """One synchronized round: select, count loads, draw and record rewards."""
    choices = [e.select(rng) for e in engines]
    loads = Counter(choices)
    rewards = []
    for engine, choice in zip(engines, choices):
        r = model.sample(choice, loads[choice], rng)
        engine.record(choice, r)
        rewards.append(r)
    return choices, rewards


def run_episode(
    engines: Sequence[PolicyEngine],
    model: RewardModel,
    rng,
    tau: Optional[int] = None,
) -> EpisodeStats:
    if not engines:
        raise ConfigError("need at least one agent")
    if any(e.k != model.choices for e in engines):
        raise ConfigError("agents and reward model disagree on the choice count")
    rounds = tau if tau is not None else engines[0].cfg.tau
    per_agent = [0.0] * len(engines)
    counts = [[0] * model.choices for _ in engines]
    for _ in range(rounds):
        choices, rewards = play_round(engines, model, rng)
        for i, (c, r) in enumerate(zip(choices, rewards)):
            per_agent[i] += r
            counts[i][c] += 1
    updates = [e.end_episode() for e in engines]
    return EpisodeStats(
        rounds=rounds,
        total_reward=sum(per_agent),
        per_agent_reward=per_agent,
        selection_counts=counts,
        updates=updates,
    )
