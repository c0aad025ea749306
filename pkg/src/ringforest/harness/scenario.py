"""Scenario schema, loading, and canonical serialization.

A scenario is the complete, seedable description of one simulated run:
topology, overlay parameters, host multiplexing, workload, the packet game,
and scheduled churn.  Scenarios round-trip losslessly through YAML (JSON is
a YAML subset and works too), and their canonical digest pins a run's inputs
inside its manifest.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..errors import ConfigError
from ..game.rewards import RewardModel


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TopologySpec(StrictModel):
    kind: Literal["single", "groups", "geo", "import"] = "single"
    n: int = Field(default=100, ge=1)  # single only
    groups: Optional[list[int]] = None  # nodes per zone, index = zone prefix
    geo_zones: int = Field(default=4, ge=1)
    geo_nodes_per_zone: int = Field(default=25, ge=1)
    csv_path: Optional[str] = None
    zone_bits: int = Field(default=0, ge=0, le=16)
    diameter_ms: float = Field(default=50.0, gt=0)
    inter_zone_ms: float = Field(default=100.0, gt=0)

    @model_validator(mode="after")
    def _coherent(self) -> "TopologySpec":
        if self.kind == "groups":
            if not self.groups:
                raise ValueError("groups topology needs a non-empty groups list")
            if any(g < 1 for g in self.groups):
                raise ValueError("every group needs at least one node")
            if len(self.groups) > (1 << self.zone_bits):
                raise ValueError("more groups than zones; raise zone_bits")
        if self.kind == "geo" and self.geo_zones > (1 << self.zone_bits):
            raise ValueError("more geo zones than zone prefixes; raise zone_bits")
        if self.kind == "import" and not self.csv_path:
            raise ValueError("import topology needs csv_path")
        if self.inter_zone_ms < self.diameter_ms:
            raise ValueError("inter-zone RTT below the zone diameter")
        return self

    @property
    def total_nodes(self) -> int:
        if self.kind == "single":
            return self.n
        if self.kind == "groups":
            return sum(self.groups or [])
        if self.kind == "geo":
            return self.geo_zones * self.geo_nodes_per_zone
        return self.n  # import: unknown until read; n is an upper bound hint


class OverlaySpec(StrictModel):
    fanout_bits: int = Field(default=4, ge=1, le=8)
    leaf_size: int = Field(default=24, ge=2)
    neighborhood: int = Field(default=8, ge=0)


class HostClassSpec(StrictModel):
    count: int = Field(ge=1)
    capacity_units: int = Field(ge=1)
    bandwidth_mbps: float = Field(gt=0)


class HostsSpec(StrictModel):
    """Optional multiplexing of several logical nodes onto shared hosts."""

    unit_capacity: int = Field(default=1, ge=1)
    classes: list[HostClassSpec] = Field(default_factory=list)

    @property
    def enabled(self) -> bool:
        return bool(self.classes)


class RewardSpec(StrictModel):
    kind: Literal["theta_over_k", "bandwidth_ratio"] = "theta_over_k"
    theta: list[float] = Field(default_factory=lambda: [0.9, 0.7, 0.5, 0.3])
    bandwidth: Optional[list[float]] = None
    rate_max: float = Field(default=1.0, gt=0)

    def to_model(self) -> RewardModel:
        return RewardModel(
            kind=self.kind,
            theta=tuple(self.theta),
            bandwidth=tuple(self.bandwidth) if self.bandwidth is not None else None,
            rate_max=self.rate_max,
        )


class GameSpec(StrictModel):
    policy: Literal["algorithm1", "bandit", "opt", "multicast"] = "algorithm1"
    choices: int = Field(default=4, ge=2)
    packets: int = Field(default=10_000, ge=1)  # total packets across agents
    tau: int = Field(default=2, ge=1)  # rounds per episode
    schedule: Literal["fixed", "theory"] = "fixed"
    alpha: float = Field(default=0.85, ge=0, le=1)
    beta: float = Field(default=0.5, gt=0, le=1)
    design: Literal["min_det", "max_det"] = "min_det"
    floor: float = Field(default=1e-3, ge=0)
    grid: int = Field(default=10, ge=1)
    max_candidates: int = Field(default=500, ge=1)
    eps: float = Field(default=0.05, ge=0, le=1)
    agents: Optional[int] = Field(default=None, ge=1)
    reward: RewardSpec = Field(default_factory=RewardSpec)
    reward_source: Literal["model", "latency"] = "model"
    packet_kb: float = Field(default=16.0, gt=0)

    @model_validator(mode="after")
    def _coherent(self) -> "GameSpec":
        if len(self.reward.theta) != self.choices:
            raise ValueError("reward.theta length must equal choices")
        if self.reward.bandwidth is not None and len(self.reward.bandwidth) != self.choices:
            raise ValueError("reward.bandwidth length must equal choices")
        if self.policy == "multicast" and self.choices > 5:
            raise ValueError("multicast supports at most 5 base choices")
        return self


class WorkloadSpec(StrictModel):
    trees: int = Field(default=1, ge=1)
    subscribers: int = Field(default=20, ge=1)
    rounds: int = Field(default=3, ge=0)
    payload_kb: float = Field(default=64.0, gt=0)  # broadcast size
    update_kb: float = Field(default=64.0, gt=0)  # per-hop aggregate size
    state_kb: float = Field(default=64.0, gt=0)  # replicated master state
    control_kb: float = Field(default=1.0, gt=0)  # join/repair messages
    compute_ms: float = Field(default=10.0, ge=0)
    agg_timeout_ms: float = Field(default=30_000.0, gt=0)


class ChurnSpec(StrictModel):
    time_ms: int = Field(ge=0)
    kind: Literal["fail", "leave", "join", "bandwidth"]
    target: Union[int, Literal["master"]] = 0  # node index, or tree 0's master
    value: Optional[float] = None  # Mbps, bandwidth kind only

    @model_validator(mode="after")
    def _coherent(self) -> "ChurnSpec":
        if self.kind == "bandwidth" and (self.value is None or self.value <= 0):
            raise ValueError("bandwidth churn needs a positive value")
        if self.kind == "join" and self.target == "master":
            raise ValueError("join cannot target the master")
        return self


class Scenario(StrictModel):
    name: str = "run"
    seed: int = 0
    topology: TopologySpec = Field(default_factory=TopologySpec)
    overlay: OverlaySpec = Field(default_factory=OverlaySpec)
    hosts: HostsSpec = Field(default_factory=HostsSpec)
    workload: WorkloadSpec = Field(default_factory=WorkloadSpec)
    game: Optional[GameSpec] = Field(default_factory=GameSpec)  # null disables
    churn: list[ChurnSpec] = Field(default_factory=list)
    keepalive_period_ms: int = Field(default=1000, ge=1)
    keepalive_misses: int = Field(default=3, ge=1)
    lmax_floor_ms: float = Field(default=500.0, gt=0)
    replicas: int = Field(default=2, ge=0)
    default_bandwidth_mbps: float = Field(default=100.0, gt=0)

    @model_validator(mode="after")
    def _coherent(self) -> "Scenario":
        if self.hosts.enabled and self.topology.kind != "single":
            raise ValueError("host multiplexing is only defined for single topologies")
        return self


def load_scenario(path: Union[str, Path]) -> Scenario:
    text = Path(path).read_text()
    data = yaml.safe_load(text)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: scenario file must hold a mapping")
    return Scenario.model_validate(data)


def scenario_to_yaml(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario.model_dump(mode="json"), sort_keys=True)


def save_scenario(scenario: Scenario, path: Union[str, Path]) -> None:
    Path(path).write_text(scenario_to_yaml(scenario))


def scenario_digest(scenario: Scenario) -> str:
    canon = json.dumps(scenario.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def apply_overrides(scenario: Scenario, overrides: dict[str, object]) -> Scenario:
    """Re-validate with dotted-path overrides, e.g. {"game.tau": 4}."""
    data = scenario.model_dump(mode="json")
    for key, value in overrides.items():
        cursor = data
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(cursor.get(part), dict):
                raise ConfigError(f"override path {key!r} does not exist")
            cursor = cursor[part]
        if parts[-1] not in cursor:
            raise ConfigError(f"override path {key!r} does not exist")
        cursor[parts[-1]] = value
    return Scenario.model_validate(data)
