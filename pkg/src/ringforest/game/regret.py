"""Expected-reward and regret oracles.

The exact oracle computes, for each agent, the leave-one-out load
distribution on every choice (a Poisson binomial over the other agents'
selection probabilities, built from prefix/suffix convolutions) and takes
the expectation of the congestion reward under it.  An exhaustive
enumerator and a Monte Carlo estimator cover small instances and spot
checks.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from typing import Sequence

import numpy as np

from ..errors import ConfigError, RangeError
from .rewards import RewardModel

Policies = Sequence[Sequence[float]]


def _check(policies: Policies, model: RewardModel) -> None:
    if not policies:
        raise ConfigError("need at least one agent")
    for p in policies:
        if len(p) != model.choices:
            raise ConfigError("policy length must match the model's choices")
        if any(x < 0 for x in p) or abs(sum(p) - 1.0) > 1e-9:
            raise ConfigError(f"policy {tuple(p)} is not a distribution")


def expected_total_reward(policies: Policies, model: RewardModel) -> float:
    """Exact expected one-round reward summed over the agents."""
    _check(policies, model)
    n = len(policies)
    total = 0.0
    for choice in range(model.choices):
        q = np.array([p[choice] for p in policies], dtype=float)
        # prefix[i] = load pmf over agents < i; suffix[i] = over agents >= i
        prefix: list[np.ndarray] = [np.array([1.0])]
        for i in range(n):
            prefix.append(np.convolve(prefix[-1], [1.0 - q[i], q[i]]))
        suffix: list[np.ndarray] = [np.array([1.0])] * (n + 1)
        suffix[n] = np.array([1.0])
        for i in range(n - 1, -1, -1):
            suffix[i] = np.convolve(suffix[i + 1], [1.0 - q[i], q[i]])
        values = np.array([model.expected(choice, k + 1) for k in range(n)])
        for i in range(n):
            if q[i] == 0.0:
                continue
            pmf = np.convolve(prefix[i], suffix[i + 1])  # others' load, length n
            total += q[i] * float(np.dot(pmf, values[: len(pmf)]))
    return total


def enumerate_total_reward(policies: Policies, model: RewardModel, limit: int = 200_000) -> float:
    """Exhaustive joint-profile expectation; only for tiny instances."""
    _check(policies, model)
    n, k = len(policies), model.choices
    if k ** n > limit:
        raise RangeError(f"profile space {k}^{n} exceeds the enumeration limit")
    total = 0.0
    for profile in itertools.product(range(k), repeat=n):
        prob = 1.0
        for p, c in zip(policies, profile):
            prob *= p[c]
        if prob == 0.0:
            continue
        loads = Counter(profile)
        total += prob * sum(model.expected(c, loads[c]) for c in profile)
    return total


def mc_total_reward(
    policies: Policies, model: RewardModel, rng, rounds: int = 20_000
) -> tuple[float, float]:
    """Sampled mean and its standard error."""
    _check(policies, model)
    cdfs = [np.cumsum(p) for p in policies]
    samples = np.empty(rounds)
    for t in range(rounds):
        profile = [int(np.searchsorted(cdf, rng.random(), side="right")) for cdf in cdfs]
        profile = [min(c, model.choices - 1) for c in profile]
        loads = Counter(profile)
        samples[t] = sum(model.sample(c, loads[c], rng) for c in profile)
    mean = float(samples.mean())
    sem = float(samples.std(ddof=1) / math.sqrt(rounds))
    return mean, sem


def symmetric_candidate_reward(
    candidate: Sequence[float], n_agents: int, model: RewardModel
) -> float:
    """Expected one-round total when all n agents play the same candidate."""
    if n_agents < 1:
        raise RangeError("need at least one agent")
    total = 0.0
    for choice, weight in enumerate(candidate):
        if weight == 0.0:
            continue
        value = 0.0
        for k in range(n_agents):
            pmf = (
                math.comb(n_agents - 1, k)
                * weight ** k
                * (1.0 - weight) ** (n_agents - 1 - k)
            )
            value += pmf * model.expected(choice, k + 1)
        total += weight * value
    return n_agents * total


def best_fixed_candidate(
    candidates: Sequence[Sequence[float]], n_agents: int, model: RewardModel
) -> tuple[int, float]:
    """The hindsight-best single candidate played by every agent."""
    best_idx, best_val = 0, -math.inf
    for idx, cand in enumerate(candidates):
        val = symmetric_candidate_reward(cand, n_agents, model)
        if val > best_val + 1e-15:
            best_idx, best_val = idx, val
    return best_idx, best_val


def episode_regret(
    policies: Policies,
    candidates: Sequence[Sequence[float]],
    model: RewardModel,
) -> float:
    """Per-round expected regret of the joint play against the best fixed
    candidate; multiply by the episode length for per-episode regret."""
    _, best = best_fixed_candidate(candidates, len(policies), model)
    return best - expected_total_reward(policies, model)


def _loo_pmfs(policies: Policies, choice: int) -> list[np.ndarray]:
    """Leave-one-out load pmfs on one choice, one per agent."""
    n = len(policies)
    q = [float(p[choice]) for p in policies]
    prefix: list[np.ndarray] = [np.array([1.0])]
    for i in range(n):
        prefix.append(np.convolve(prefix[-1], [1.0 - q[i], q[i]]))
    suffix: list[np.ndarray] = [np.array([1.0])] * (n + 1)
    for i in range(n - 1, -1, -1):
        suffix[i] = np.convolve(suffix[i + 1], [1.0 - q[i], q[i]])
    return [np.convolve(prefix[i], suffix[i + 1]) for i in range(n)]


def deviation_values(policies: Policies, model: RewardModel) -> list[list[float]]:
    """values[i][p]: agent i's expected reward if it deviates to pure choice p
    while everyone else keeps playing their current distribution."""
    _check(policies, model)
    n = len(policies)
    out = [[0.0] * model.choices for _ in range(n)]
    for choice in range(model.choices):
        pmfs = _loo_pmfs(policies, choice)
        values = np.array([model.expected(choice, k + 1) for k in range(n)])
        for i in range(n):
            pmf = pmfs[i]
            out[i][choice] = float(np.dot(pmf, values[: len(pmf)]))
    return out


def nash_gap(policies: Policies, model: RewardModel) -> float:
    """Largest expected one-round gain any single agent can get by a
    unilateral pure deviation; zero at an exact equilibrium."""
    dev = deviation_values(policies, model)
    gap = 0.0
    for i, policy in enumerate(policies):
        current = sum(w * dev[i][p] for p, w in enumerate(policy))
        gap = max(gap, max(dev[i]) - current)
    return gap


def enumerate_deviation_values(
    policies: Policies, model: RewardModel, limit: int = 200_000
) -> list[list[float]]:
    """Brute-force twin of deviation_values for tiny instances."""
    _check(policies, model)
    n, k = len(policies), model.choices
    if k ** max(1, n - 1) > limit:
        raise RangeError("profile space exceeds the enumeration limit")
    out = [[0.0] * k for _ in range(n)]
    for i in range(n):
        others = [j for j in range(n) if j != i]
        for profile in itertools.product(range(k), repeat=len(others)):
            prob = 1.0
            for j, c in zip(others, profile):
                prob *= policies[j][c]
            if prob == 0.0:
                continue
            loads = Counter(profile)
            for p in range(k):
                out[i][p] += prob * model.expected(p, loads[p] + 1)
    return out


def enumerate_nash_gap(policies: Policies, model: RewardModel) -> float:
    dev = enumerate_deviation_values(policies, model)
    gap = 0.0
    for i, policy in enumerate(policies):
        current = sum(w * dev[i][p] for p, w in enumerate(policy))
        gap = max(gap, max(dev[i]) - current)
    return gap
