"""Scenario-driven simulation harness: schema, topology, runner, outputs."""

from .checks import check_overlay_dump, evaluate_history
from .metrics import (
    MetricsBundle,
    build_heatmap,
    compare_manifests,
    load_manifest,
    parse_csv,
    render_csv,
    render_matrix,
)
from .runner import run_scenario
from .scenario import (
    ChurnSpec,
    GameSpec,
    HostClassSpec,
    HostsSpec,
    OverlaySpec,
    RewardSpec,
    Scenario,
    TopologySpec,
    WorkloadSpec,
    apply_overrides,
    load_scenario,
    save_scenario,
    scenario_digest,
    scenario_to_yaml,
)
from .sweep import SweepResult, expand_grid, replay_manifest, run_sweep, summarize
from .topology import BuiltTopology, build_topology

__all__ = [
    "BuiltTopology",
    "ChurnSpec",
    "GameSpec",
    "HostClassSpec",
    "HostsSpec",
    "MetricsBundle",
    "OverlaySpec",
    "RewardSpec",
    "Scenario",
    "SweepResult",
    "TopologySpec",
    "WorkloadSpec",
    "apply_overrides",
    "build_heatmap",
    "build_topology",
    "check_overlay_dump",
    "compare_manifests",
    "evaluate_history",
    "expand_grid",
    "load_manifest",
    "load_scenario",
    "parse_csv",
    "render_csv",
    "render_matrix",
    "replay_manifest",
    "run_scenario",
    "run_sweep",
    "save_scenario",
    "scenario_digest",
    "scenario_to_yaml",
    "summarize",
]
