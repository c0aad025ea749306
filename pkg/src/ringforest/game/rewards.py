"""Congestion-aware reward models for the choice game.

A choice p has a quality theta_p; its realized reward shrinks as more agents
load it.  Two families: "theta_over_k" divides quality by the load, and
"bandwidth_ratio" scales quality by the saturated share B_p / (k * rate_max).
Expected values are non-increasing in the load for both.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..errors import ConfigError, RangeError

KINDS = ("theta_over_k", "bandwidth_ratio")


@dataclass(frozen=True)
class RewardModel:
    kind: str
    theta: tuple[float, ...]
    bandwidth: Optional[tuple[float, ...]] = None  # Mbps per choice
    rate_max: float = 1.0  # Mbps demanded per agent

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown reward kind {self.kind!r}")
        if not self.theta:
            raise ConfigError("need at least one choice")
        if any(not 0.0 <= t <= 1.0 for t in self.theta):
            raise ConfigError("theta values must lie in [0, 1]")
        if self.kind == "bandwidth_ratio":
            if self.bandwidth is None or len(self.bandwidth) != len(self.theta):
                raise ConfigError("bandwidth_ratio needs one bandwidth per choice")
            if any(b <= 0 for b in self.bandwidth):
                raise ConfigError("bandwidths must be positive")
            if self.rate_max <= 0:
                raise ConfigError("rate_max must be positive")

    @property
    def choices(self) -> int:
        return len(self.theta)

    def _share(self, choice: int, load: int) -> float:
        if self.kind == "theta_over_k":
            return 1.0 / load
        return min(1.0, self.bandwidth[choice] / (load * self.rate_max))

    def expected(self, choice: int, load: int) -> float:
        """Mean reward of one agent on ``choice`` when ``load`` agents share it."""
        if not 0 <= choice < self.choices:
            raise RangeError(f"choice {choice} out of range")
        if load < 1:
            raise RangeError("load counts the agent itself; it is at least 1")
        return self.theta[choice] * self._share(choice, load)

    def sample(self, choice: int, load: int, rng) -> float:
        """One bandit draw: a quality coin scaled by the congestion share."""
        if not 0 <= choice < self.choices:
            raise RangeError(f"choice {choice} out of range")
        if load < 1:
            raise RangeError("load counts the agent itself; it is at least 1")
        share = self._share(choice, load)
        return share if rng.random() < self.theta[choice] else 0.0
