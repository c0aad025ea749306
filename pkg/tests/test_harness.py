"""Harness tests: schema round-trips, topology builders, runner determinism,
aggregation correctness against an independent oracle, churn recovery, and
the sweep/replay machinery."""

import json
import random

import pytest

from ringforest.errors import ConfigError
from ringforest.harness import (
    Scenario,
    apply_overrides,
    build_heatmap,
    build_topology,
    check_overlay_dump,
    evaluate_history,
    expand_grid,
    load_scenario,
    parse_csv,
    render_csv,
    replay_manifest,
    run_scenario,
    run_sweep,
    save_scenario,
    scenario_digest,
)
from ringforest.idspace import to_hex, zone_of, ZoneConfig


def small_scenario(**over):
    data = {
        "seed": 3,
        "topology": {"kind": "single", "n": 40},
        "workload": {"trees": 1, "subscribers": 10, "rounds": 2},
        "game": {"choices": 3, "packets": 60, "tau": 3, "reward": {"theta": [0.9, 0.6, 0.3]}},
    }
    data.update(over)
    return Scenario.model_validate(data)


# -- scenario schema ----------------------------------------------------------


def test_scenario_yaml_round_trip(tmp_path):
    scn = small_scenario(churn=[{"time_ms": 100, "kind": "fail", "target": "master"}])
    path = tmp_path / "s.yaml"
    save_scenario(scn, path)
    again = load_scenario(path)
    assert again == scn
    assert scenario_digest(again) == scenario_digest(scn)


def test_scenario_rejects_unknown_fields():
    with pytest.raises(Exception):
        Scenario.model_validate({"seed": 1, "bogus": True})


def test_scenario_coherence_checks():
    with pytest.raises(Exception):
        Scenario.model_validate(
            {"topology": {"kind": "groups", "groups": [5, 5, 5], "zone_bits": 1}}
        )
    with pytest.raises(Exception):
        Scenario.model_validate(
            {"game": {"policy": "multicast", "choices": 6,
                      "reward": {"theta": [0.5] * 6}}}
        )
    with pytest.raises(Exception):
        Scenario.model_validate(
            {"churn": [{"time_ms": 0, "kind": "bandwidth", "target": 1}]}
        )


def test_apply_overrides_dotted_paths():
    scn = small_scenario()
    out = apply_overrides(scn, {"game.tau": 7, "topology.n": 99, "seed": 42})
    assert out.game.tau == 7
    assert out.topology.n == 99
    assert out.seed == 42
    assert scn.game.tau == 3  # original untouched
    with pytest.raises(ConfigError):
        apply_overrides(scn, {"game.nonexistent": 1})


def test_digest_tracks_content():
    a = small_scenario()
    b = apply_overrides(a, {"seed": 4})
    assert scenario_digest(a) != scenario_digest(b)
    assert scenario_digest(a) == scenario_digest(small_scenario())


# -- topology builders --------------------------------------------------------


def test_single_topology_distinct_ids():
    scn = small_scenario()
    built = build_topology(
        scn.topology, scn.overlay, scn.hosts, random.Random("x")
    )
    assert len(built.nodes) == 40
    assert len(set(built.nodes)) == 40


def test_groups_topology_zone_prefixes():
    scn = Scenario.model_validate(
        {"topology": {"kind": "groups", "groups": [5, 7, 3], "zone_bits": 4}}
    )
    built = build_topology(scn.topology, scn.overlay, scn.hosts, random.Random("x"))
    cfg = ZoneConfig(zone_bits=4)
    zones = [zone_of(n, cfg) for n in built.nodes]
    assert zones.count(0) == 5 and zones.count(1) == 7 and zones.count(2) == 3


def test_geo_topology_rtt_structure():
    scn = Scenario.model_validate(
        {"topology": {"kind": "geo", "geo_zones": 4, "geo_nodes_per_zone": 10,
                      "zone_bits": 2, "diameter_ms": 50, "inter_zone_ms": 100}}
    )
    built = build_topology(scn.topology, scn.overlay, scn.hosts, random.Random("x"))
    cfg = ZoneConfig(zone_bits=2)
    by_zone = {}
    for n in built.nodes:
        by_zone.setdefault(zone_of(n, cfg), []).append(n)
    a, b = by_zone[0][0], by_zone[0][1]
    c = by_zone[3][0]
    assert built.proximity(a, b) < built.proximity(a, c)
    assert built.proximity(a, a) == 0.0


def test_import_topology_reads_csv(tmp_path):
    path = tmp_path / "sites.csv"
    rows = ["id,lat,lon"] + [f"{i},{40 + i * 0.01},{-3 + i * 0.01}" for i in range(30)]
    path.write_text("\n".join(rows) + "\n")
    scn = Scenario.model_validate(
        {"topology": {"kind": "import", "csv_path": str(path), "zone_bits": 2}}
    )
    built = build_topology(scn.topology, scn.overlay, scn.hosts, random.Random("x"))
    assert len(built.nodes) == 30
    assert len(set(built.nodes)) == 30
    assert all(n in built.positions for n in built.nodes)


def test_import_topology_missing_file():
    scn = Scenario.model_validate(
        {"topology": {"kind": "import", "csv_path": "/nonexistent.csv"}}
    )
    with pytest.raises(ConfigError):
        build_topology(scn.topology, scn.overlay, scn.hosts, random.Random("x"))


def test_hosts_need_enough_slots():
    scn = Scenario.model_validate(
        {
            "topology": {"kind": "single", "n": 50},
            "hosts": {"classes": [{"count": 2, "capacity_units": 4, "bandwidth_mbps": 50}]},
        }
    )
    with pytest.raises(ConfigError):
        build_topology(scn.topology, scn.overlay, scn.hosts, random.Random("x"))


def test_hosts_share_bandwidth():
    scn = Scenario.model_validate(
        {
            "seed": 4,
            "topology": {"kind": "single", "n": 16},
            "hosts": {"classes": [{"count": 4, "capacity_units": 4, "bandwidth_mbps": 50}]},
            "workload": {"trees": 1, "subscribers": 8, "rounds": 1},
            "game": None,
        }
    )
    bundle = run_scenario(scn)
    assert bundle.valid


# -- runner ------------------------------------------------------------------


def test_runner_is_deterministic():
    scn = small_scenario()
    m1 = run_scenario(scn).manifest()
    m2 = run_scenario(scn).manifest()
    assert m1["files"] == m2["files"]
    m3 = run_scenario(apply_overrides(scn, {"seed": 9})).manifest()
    assert m1["files"] != m3["files"]


def test_aggregation_matches_weighted_mean_oracle():
    scn = small_scenario(game=None)
    bundle = run_scenario(scn)
    dump = json.loads(bundle.files["overlay.json"])
    subs = dump["trees"]["model-0"]["subscribers"]
    header, rows = parse_csv(bundle.files["rounds.csv"])
    assert len(rows) == 2
    for row in rows:
        round_no = int(row[header.index("round")])
        acc_wv = acc_w = 0.0
        for node_hex in subs:
            rng = random.Random(f"{scn.seed}:contrib:0:{round_no}:{node_hex}")
            v, w = rng.random(), 1.0 + rng.random()
            acc_wv += w * v
            acc_w += w
        assert float(row[header.index("value")]) == pytest.approx(acc_wv / acc_w, abs=1e-12)
        assert float(row[header.index("weight")]) == pytest.approx(acc_w, abs=1e-12)
        assert int(row[header.index("contributors")]) == len(subs)


def test_master_failure_resumes_rounds():
    scn = Scenario.model_validate(
        {
            "seed": 11,
            "topology": {"kind": "single", "n": 60},
            "workload": {"trees": 1, "subscribers": 15, "rounds": 8,
                         "compute_ms": 400, "payload_kb": 2000, "update_kb": 2000,
                         "agg_timeout_ms": 20000},
            "game": None,
            "keepalive_period_ms": 200,
            "churn": [{"time_ms": 2500, "kind": "fail", "target": "master"}],
        }
    )
    bundle = run_scenario(scn)
    assert bundle.valid
    assert len(bundle.data["recovery"]) == 1
    rounds = bundle.data["rounds"]
    assert [r[1] for r in rounds] == list(range(1, 9))
    # detection waits keepalive_period * misses after the failure
    detect_ms = bundle.data["recovery"][0][0]
    assert detect_ms == pytest.approx(2500 + 200 * 3)


def test_worker_failure_leaves_stragglers():
    scn = Scenario.model_validate(
        {
            "seed": 6,
            "topology": {"kind": "single", "n": 30},
            "workload": {"trees": 1, "subscribers": 30, "rounds": 3,
                         "compute_ms": 400, "agg_timeout_ms": 1500},
            "game": None,
            "keepalive_period_ms": 200,
            "churn": [{"time_ms": 100, "kind": "fail", "target": 17}],
        }
    )
    built = build_topology(scn.topology, scn.overlay, scn.hosts,
                           random.Random(f"{scn.seed}:topology"))
    victim = built.nodes[17]
    bundle = run_scenario(scn)
    dump = json.loads(bundle.files["overlay.json"])
    if dump["trees"]["model-0"]["master"] == to_hex(victim):
        pytest.skip("victim drew the master role for this seed")
    assert bundle.valid
    assert len(bundle.data["recovery"]) == 1
    rounds = bundle.data["rounds"]
    assert len(rounds) == 3
    assert rounds[0][4] < 30  # the victim's contribution is missing
    assert all(r[4] == 29 for r in rounds[1:])
    assert to_hex(victim) not in dump["nodes"]


def test_concurrent_failures_all_recovered():
    scn = Scenario.model_validate(
        {
            "seed": 8,
            "topology": {"kind": "single", "n": 80},
            "workload": {"trees": 2, "subscribers": 25, "rounds": 2},
            "game": None,
            "churn": [{"time_ms": 500, "kind": "fail", "target": t} for t in (3, 9, 27, 44)],
        }
    )
    bundle = run_scenario(scn)
    assert bundle.validity["trees"]
    assert bundle.validity["flow_conservation"]
    assert len(bundle.data["recovery"]) == 4


def test_latency_rewards_stay_bounded():
    scn = Scenario.model_validate(
        {
            "seed": 5,
            "topology": {"kind": "geo", "geo_zones": 4, "geo_nodes_per_zone": 10,
                         "zone_bits": 4},
            "workload": {"trees": 1, "subscribers": 8, "rounds": 0},
            "game": {"choices": 2, "packets": 64, "tau": 2,
                     "reward": {"theta": [0.9, 0.5]},
                     "reward_source": "latency", "packet_kb": 64},
        }
    )
    bundle = run_scenario(scn)
    header, rows = parse_csv(bundle.files["packets.csv"])
    rewards = [float(r[header.index("reward")]) for r in rows]
    assert rows and all(0.0 <= r <= 1.0 for r in rewards)
    assert bundle.validity["reward_clipping"]


def test_packets_csv_shape():
    scn = small_scenario()
    bundle = run_scenario(scn)
    header, rows = parse_csv(bundle.files["packets.csv"])
    assert header == ["episode", "node", "policy_0", "policy_1", "policy_2",
                      "chosen", "reward"]
    n_agents = len(bundle.data["agents"])
    assert len(rows) >= scn.game.packets
    assert len(rows) % n_agents == 0
    for row in rows[:20]:
        probs = [float(x) for x in row[2:5]]
        assert sum(probs) == pytest.approx(1.0, abs=1e-9)
        assert 0 <= int(row[5]) < 3


def test_opt_policy_plays_fixed_assignment():
    scn = small_scenario()
    bundle = run_scenario(scn, policy="opt")
    header, rows = parse_csv(bundle.files["packets.csv"])
    per_node = {}
    for row in rows:
        per_node.setdefault(row[1], set()).add(row[header.index("chosen")])
    assert all(len(chosen) == 1 for chosen in per_node.values())


def test_manifest_has_no_timestamps():
    bundle = run_scenario(small_scenario())
    manifest = json.loads(bundle.files["manifest.json"])
    assert set(manifest) == {
        "scenario", "scenario_digest", "seed", "policy", "versions",
        "files", "validity", "notes",
    }
    assert manifest["versions"].keys() == {"ringforest", "python"}


# -- offline checks -----------------------------------------------------------


def test_overlay_dump_check_passes_real_dump():
    bundle = run_scenario(small_scenario(game=None))
    dump = json.loads(bundle.files["overlay.json"])
    assert check_overlay_dump(dump) == []


def test_overlay_dump_check_flags_problems():
    bundle = run_scenario(small_scenario(game=None))
    dump = json.loads(bundle.files["overlay.json"])
    tree = dump["trees"]["model-0"]
    bad = json.loads(json.dumps(dump))
    bad["trees"]["model-0"]["edges"].append([tree["master"], "00" * 16])
    assert any("unknown node" in p for p in check_overlay_dump(bad))
    bad = json.loads(json.dumps(dump))
    edges = bad["trees"]["model-0"]["edges"]
    child = edges[0][1]
    edges.append([edges[-1][1], child])
    assert any("two parents" in p for p in check_overlay_dump(bad))
    assert check_overlay_dump({"nodes": []}) == ["dump has no node list"]


def test_history_evaluation_matches_bandit_regret():
    scn = small_scenario(game={"policy": "bandit", "choices": 3, "packets": 90,
                               "tau": 3, "reward": {"theta": [0.9, 0.6, 0.3]}})
    bundle = run_scenario(scn)
    redone = evaluate_history(bundle.files["packets.csv"], scn)
    header, rows = parse_csv(bundle.files["regret.csv"])
    assert len(redone) == len(rows)
    for ours, theirs in zip(redone, rows):
        assert ours[1] == pytest.approx(float(theirs[header.index("gap")]), abs=1e-12)
        assert ours[2] == pytest.approx(float(theirs[header.index("cum_gap")]), abs=1e-12)


def test_history_evaluation_needs_game():
    scn = small_scenario(game=None)
    with pytest.raises(ConfigError):
        evaluate_history("episode,node,chosen\n", scn)


# -- sweep and replay --------------------------------------------------------


def test_expand_grid_cartesian():
    scn = small_scenario()
    grid = expand_grid(scn, {"seed": [1, 2], "game.tau": [2, 4, 8]})
    assert len(grid) == 6
    assert grid[0][1].seed == 1 and grid[0][1].game.tau == 2
    assert {o["seed"] for o, _ in grid} == {1, 2}
    with pytest.raises(ConfigError):
        expand_grid(scn, {"seed": 5})


def test_sweep_table_and_order():
    scn = small_scenario()
    result = run_sweep(scn, {"seed": [1, 2]})
    assert len(result.bundles) == 2
    lines = result.table.splitlines()
    assert lines[0].startswith("seed,")
    assert len(lines) == 3


def test_replay_reproduces_and_detects_tamper():
    scn = small_scenario()
    manifest = run_scenario(scn).manifest()
    _, diffs = replay_manifest(manifest)
    assert diffs == []
    manifest["files"]["rounds.csv"] = "0" * 64
    _, diffs = replay_manifest(manifest)
    assert diffs == ["rounds.csv: hash mismatch"]


# -- metric helpers ----------------------------------------------------------


def test_render_csv_rejects_ragged_rows():
    with pytest.raises(ValueError):
        render_csv(["a", "b"], [[1]])


def test_build_heatmap_bins():
    samples = [(i, i % 4) for i in range(100)]
    matrix = build_heatmap(samples, choices=4, bins=10)
    assert len(matrix) == 10 and len(matrix[0]) == 4
    assert sum(sum(row) for row in matrix) == 100
    assert all(sum(row) == 10 for row in matrix)
    assert [sum(matrix[r][c] for r in range(10)) for c in range(4)] == [25, 25, 25, 25]
