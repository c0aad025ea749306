"""Reference strategies the optimized policy is judged against."""

from __future__ import annotations

import itertools
import math
from typing import Optional

from ..errors import RangeError
from .rewards import RewardModel


class EpsGreedyBandit:
    """Per-agent epsilon-greedy with a round-robin warm start.

    Exploration decays as eps / sqrt(plays since warm-up); ties on the
    empirical means go to the lowest index.
    """

    def __init__(self, k: int, eps: float = 0.05):
        if k < 1:
            raise RangeError("need at least one choice")
        if not 0.0 <= eps <= 1.0:
            raise RangeError("eps must lie in [0, 1]")
        self.k = k
        self.eps = eps
        self.counts = [0] * k
        self.sums = [0.0] * k
        self.plays = 0

    def select(self, rng) -> int:
        if self.plays < self.k:
            return self.plays
        step = self.plays - self.k + 1
        if rng.random() < self.eps / math.sqrt(step):
            return rng.randrange(self.k)
        means = [
            self.sums[i] / self.counts[i] if self.counts[i] else 0.0
            for i in range(self.k)
        ]
        return max(range(self.k), key=lambda i: (means[i], -i))

    def record(self, choice: int, reward: float) -> None:
        if not 0 <= choice < self.k:
            raise RangeError(f"choice {choice} out of range")
        self.counts[choice] += 1
        self.sums[choice] += reward
        self.plays += 1


def assignment_value(loads: list[int], model: RewardModel) -> float:
    """Total expected reward of a fixed load vector."""
    return sum(
        loads[c] * model.expected(c, loads[c]) for c in range(model.choices) if loads[c]
    )


def opt_assignment(
    n_agents: int, model: RewardModel, exhaustive_limit: int = 10_000
) -> tuple[list[int], float]:
    """Centralized full-information assignment of agents to choices.

    Joint spaces up to the limit are searched exhaustively; larger ones use
    greedy marginal gains (exact whenever per-choice totals are concave in
    the load, which holds for both reward families)."""
    if n_agents < 1:
        raise RangeError("need at least one agent")
    k = model.choices
    if k ** n_agents <= exhaustive_limit:
        best_loads: Optional[list[int]] = None
        best_val = -math.inf
        for profile in itertools.product(range(k), repeat=n_agents):
            loads = [0] * k
            for c in profile:
                loads[c] += 1
            val = assignment_value(loads, model)
            if val > best_val + 1e-15:
                best_val, best_loads = val, loads
        assert best_loads is not None
        return best_loads, best_val
    loads = [0] * k
    value = 0.0
    for _ in range(n_agents):
        gains = []
        for c in range(k):
            trial = loads.copy()
            trial[c] += 1
            gains.append(assignment_value(trial, model) - value)
        pick = max(range(k), key=lambda c: (gains[c], -c))
        loads[pick] += 1
        value += gains[pick]
    return loads, value
