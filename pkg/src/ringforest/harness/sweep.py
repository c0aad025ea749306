"""Parameter sweeps over scenario grids, and manifest-driven replay."""

from __future__ import annotations

import itertools
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from ..errors import ConfigError
from .metrics import MetricsBundle, render_csv
from .runner import run_scenario
from .scenario import Scenario, apply_overrides


def summarize(bundle: MetricsBundle) -> dict:
    """Headline numbers for one run, used in sweep tables."""
    rounds = bundle.data.get("rounds", [])
    recovery = bundle.data.get("recovery", [])
    regret = bundle.data.get("regret", [])
    hops = bundle.data.get("hop_counts", [])
    out: dict = {
        "valid": int(bundle.valid),
        "rounds_committed": len(rounds),
        "stragglers": sum(r[5] for r in rounds),
        "failures_repaired": len(recovery),
    }
    out["mean_recovery_ms"] = (
        statistics.fmean(r[2] for r in recovery) if recovery else 0.0
    )
    out["final_gap_per_round"] = regret[-1][5] if regret else 0.0
    if hops and sum(hops) > 0:
        total = sum(hops)
        freqs = [h / total for h in hops]
        out["hop_freq_variance"] = statistics.pvariance(freqs)
    else:
        out["hop_freq_variance"] = 0.0
    return out


@dataclass
class SweepResult:
    combos: list[dict]
    bundles: list[MetricsBundle]
    table: str = ""

    def run_names(self) -> list[str]:
        return [f"run-{i:03d}" for i in range(len(self.bundles))]


def expand_grid(base: Scenario, vary: dict[str, list]) -> list[tuple[dict, Scenario]]:
    if not vary:
        return [({}, base)]
    keys = sorted(vary)
    for key in keys:
        if not isinstance(vary[key], list) or not vary[key]:
            raise ConfigError(f"vary values for {key!r} must be a non-empty list")
    out = []
    for combo in itertools.product(*(vary[k] for k in keys)):
        overrides = dict(zip(keys, combo))
        out.append((overrides, apply_overrides(base, overrides)))
    return out


def run_sweep(
    base: Scenario,
    vary: dict[str, list],
    policy: Optional[str] = None,
    workers: int = 1,
) -> SweepResult:
    grid = expand_grid(base, vary)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            bundles = list(pool.map(lambda gs: run_scenario(gs[1], policy=policy), grid))
    else:
        bundles = [run_scenario(scn, policy=policy) for _, scn in grid]
    keys = sorted(vary) if vary else []
    rows = []
    summaries = [summarize(b) for b in bundles]
    metric_names = sorted(summaries[0]) if summaries else []
    for (overrides, _), summary in zip(grid, summaries):
        rows.append([str(overrides.get(k, "")) for k in keys] + [summary[m] for m in metric_names])
    table = render_csv(keys + metric_names, rows)
    return SweepResult(combos=[o for o, _ in grid], bundles=bundles, table=table)


def replay_manifest(manifest: dict, trace: bool = False) -> tuple[MetricsBundle, list[str]]:
    """Re-run the scenario embedded in a manifest; report metric divergences.

    An empty diff list means every output file hashed identically, which is
    the reproducibility contract for a pinned seed.
    """
    scn = Scenario.model_validate(manifest["scenario"])
    bundle = run_scenario(scn, policy=manifest.get("policy"), trace=trace)
    fresh = bundle.manifest()
    diffs = []
    old_files = manifest.get("files", {})
    for name in sorted(set(old_files) | set(fresh["files"])):
        if name == "manifest.json":
            continue
        if name not in old_files:
            diffs.append(f"{name}: absent from the original manifest")
        elif name not in fresh["files"]:
            diffs.append(f"{name}: not produced by the replay")
        elif old_files[name] != fresh["files"][name]:
            diffs.append(f"{name}: hash mismatch")
    return bundle, diffs
