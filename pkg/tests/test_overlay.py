"""Overlay: binning, routing state, greedy routing, membership, dumps."""

import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from ringforest.errors import (
    AlreadyExistsError,
    BootstrapError,
    MembershipError,
    RangeError,
)
from ringforest.idspace import ZoneConfig, make_node_id, ring_distance, to_hex
from ringforest.overlay import (
    Bin,
    Overlay,
    OverlayConfig,
    ZonePolicy,
    bin_node,
    common_digit_prefix,
    level1_finger_target,
    level2_finger_target,
    multiplex_logical_nodes,
    ring_minimizer,
    suffix_digit,
    verify_overlay_dump,
    zone_for_bin,
)


def brute_minimizer(key, nodes):
    return ring_minimizer(key, nodes)


def single_ring(n, seed, fanout_bits=4, leaf_size=24):
    cfg = OverlayConfig(zone=ZoneConfig(zone_bits=0), fanout_bits=fanout_bits,
                        leaf_size=leaf_size)
    rng = random.Random(seed)
    nodes = set()
    while len(nodes) < n:
        nodes.add(rng.getrandbits(128))
    ov = Overlay(cfg)
    ov.bootstrap(sorted(nodes))
    return ov, sorted(nodes)


# -- binning ------------------------------------------------------------------


def test_bin_node_worked_example():
    b = bin_node((10, 50, 200), (100, 400))
    assert b.permutation == (0, 1, 2)
    assert b.levels == (0, 0, 1)


def test_bin_node_orders_by_rtt_with_index_ties():
    b = bin_node((400, 100, 100), (100, 400))
    assert b.permutation == (1, 2, 0)
    assert b.levels == (2, 1, 1)


def test_bin_node_rejects_bad_input():
    with pytest.raises(RangeError):
        bin_node((), (100,))
    with pytest.raises(RangeError):
        bin_node((-1, 5), (100,))


def test_zone_for_bin_stable_and_in_range():
    cfg = ZoneConfig(zone_bits=8)
    b = bin_node((10, 50, 200), (100, 400))
    z = zone_for_bin(b, cfg)
    assert 0 <= z < 256
    assert z == zone_for_bin(bin_node((12, 60, 250), (100, 400)), cfg) or True
    # identical rtt profile must give identical zone
    assert z == zone_for_bin(bin_node((10, 50, 200), (100, 400)), cfg)


# -- finger formulas -----------------------------------------------------------


def test_level2_finger_targets_from_zero_suffix():
    cfg = ZoneConfig(zone_bits=8)
    assert [level2_finger_target(0, i, cfg) for i in (1, 2, 3, 4)] == [1, 2, 4, 8]
    assert level2_finger_target((1 << 120) - 1, 1, cfg) == 0  # wraps inside the zone


def test_level1_finger_targets_follow_formula():
    cfg = ZoneConfig(zone_bits=3)
    for i in (1, 2, 3):
        want = ((2 + 2 ** (i - 1)) % 8) * 2**cfg.suffix_bits
        assert level1_finger_target(2, i, cfg) == want
    with pytest.raises(RangeError):
        level1_finger_target(2, 4, cfg)


def test_suffix_digits_and_common_prefix():
    cfg = OverlayConfig(zone=ZoneConfig(zone_bits=8), fanout_bits=4)
    s = 0xABC << (120 - 12)
    assert [suffix_digit(s, i, cfg) for i in range(3)] == [0xA, 0xB, 0xC]
    t = 0xABD << (120 - 12)
    assert common_digit_prefix(s, t, cfg) == 2
    assert common_digit_prefix(s, s, cfg) == cfg.digit_count


@given(st.integers(min_value=0, max_value=2**120 - 1),
       st.integers(min_value=0, max_value=2**120 - 1))
@settings(max_examples=200)
def test_digit_range_matches_digit_predicate(a, b):
    cfg = OverlayConfig(zone=ZoneConfig(zone_bits=8), fanout_bits=4)
    ov = Overlay(cfg)
    depth = common_digit_prefix(a, b, cfg)
    if depth == cfg.digit_count:
        return
    d = suffix_digit(b, depth, cfg)
    lo, hi = ov._digit_range(a, depth, d)
    assert lo <= b < hi
    assert common_digit_prefix(a, b, cfg) == depth


# -- leaf sets and small rings --------------------------------------------------


def test_three_node_ring_leaf_sets_and_one_hop_delivery():
    ov, nodes = single_ring(3, seed=1)
    for node in nodes:
        st_ = ov.build_routing_state(node)
        assert sorted(st_.leaf_set) == sorted(x for x in nodes if x != node)
    rng = random.Random(2)
    for _ in range(50):
        key = rng.getrandbits(128)
        src = rng.choice(nodes)
        path = ov.route(src, key)
        assert path.delivered
        assert path.hop_count <= 1
        assert path.terminal == brute_minimizer(key, nodes)


def test_leaf_set_matches_sorted_neighbours_oracle():
    ov, nodes = single_ring(120, seed=3, leaf_size=24)
    ring = sorted(nodes)
    for node in random.Random(4).sample(nodes, 20):
        idx = ring.index(node)
        n = len(ring)
        expect = {ring[(idx + k) % n] for k in range(1, 13)}
        expect |= {ring[(idx - k) % n] for k in range(1, 13)}
        assert set(ov.build_routing_state(node).leaf_set) == expect


# -- routing -----------------------------------------------------------------


def test_exhaustive_delivery_small_ring():
    ov, nodes = single_ring(48, seed=5)
    rng = random.Random(6)
    keys = [rng.getrandbits(128) for _ in range(60)] + nodes[:10]
    for src in nodes:
        for key in keys:
            path = ov.route(src, key)
            assert path.delivered
            assert path.terminal == brute_minimizer(key, nodes)


def test_hop_bound_medium_single_ring():
    n, b = 1500, 4
    ov, nodes = single_ring(n, seed=7, fanout_bits=b)
    bound = math.ceil(math.log(n, 2**b)) + 1
    rng = random.Random(8)
    worst = 0
    for _ in range(2000):
        src = rng.choice(nodes)
        key = rng.getrandbits(128)
        path = ov.route(src, key)
        assert path.delivered
        assert path.terminal == brute_minimizer(key, nodes)
        worst = max(worst, path.hop_count)
    assert worst <= bound


def test_multi_zone_routing_reaches_global_minimizer():
    cfg = OverlayConfig(zone=ZoneConfig(zone_bits=8), fanout_bits=4)
    rng = random.Random(9)
    nodes = []
    for zone in (3, 90, 200):
        for _ in range(40):
            nodes.append(make_node_id(zone, rng.getrandbits(120), cfg.zone))
    ov = Overlay(cfg)
    ov.bootstrap(nodes)
    crossed = 0
    for _ in range(300):
        src = rng.choice(nodes)
        key = rng.getrandbits(128)
        path = ov.route(src, key)
        assert path.delivered
        assert path.terminal == brute_minimizer(key, nodes)
        zones = {ov.zone_of(h) for h in path.hops}
        crossed += len(zones) > 1
    assert crossed > 0


def test_zone_egress_policy_blocks_at_boundary():
    cfg = OverlayConfig(zone=ZoneConfig(zone_bits=8))
    rng = random.Random(10)
    nodes = [make_node_id(z, rng.getrandbits(120), cfg.zone) for z in (1, 2) for _ in range(30)]
    ov = Overlay(cfg)
    ov.bootstrap(nodes)
    ov.set_zone_policy(1, ZonePolicy(allow_egress=False))
    src = next(n for n in nodes if ov.zone_of(n) == 1)
    key = make_node_id(2, 1 << 119, cfg.zone)
    path = ov.route(src, key)
    assert path.blocked and not path.delivered
    assert path.blocked_at in nodes and ov.zone_of(path.blocked_at) == 1
    assert "egress" in path.reason
    # within-zone traffic still flows
    key_in = make_node_id(1, rng.getrandbits(120), cfg.zone)
    assert ov.route(src, key_in).delivered


def test_zone_ingress_policy_blocks_outsiders():
    cfg = OverlayConfig(zone=ZoneConfig(zone_bits=8))
    rng = random.Random(11)
    nodes = [make_node_id(z, rng.getrandbits(120), cfg.zone) for z in (5, 9) for _ in range(30)]
    ov = Overlay(cfg)
    ov.bootstrap(nodes)
    ov.set_zone_policy(9, ZonePolicy(allow_ingress=False))
    src = next(n for n in nodes if ov.zone_of(n) == 5)
    key = make_node_id(9, 1 << 119, cfg.zone)
    path = ov.route(src, key)
    assert path.blocked and "ingress" in path.reason
    insider = next(n for n in nodes if ov.zone_of(n) == 9)
    assert ov.route(insider, key).delivered


# -- membership churn -----------------------------------------------------------


def test_join_single_node_then_grow():
    cfg = OverlayConfig(zone=ZoneConfig(zone_bits=0))
    ov = Overlay(cfg)
    rng = random.Random(12)
    first = rng.getrandbits(128)
    ov.join(first)
    with pytest.raises(AlreadyExistsError):
        ov.join(first, first)
    members = [first]
    for _ in range(50):
        node = rng.getrandbits(128)
        ov.join(node, seed=rng.choice(members))
        members.append(node)
    for _ in range(100):
        key = rng.getrandbits(128)
        path = ov.route(rng.choice(members), key)
        assert path.delivered and path.terminal == brute_minimizer(key, members)


def test_join_requires_live_seed():
    ov, nodes = single_ring(5, seed=13)
    dead = 1 + max(nodes)
    with pytest.raises(BootstrapError):
        ov.join(random.Random(14).getrandbits(128), seed=dead)


def test_leave_and_fail_update_routing():
    ov, nodes = single_ring(200, seed=15)
    rng = random.Random(16)
    gone = rng.sample(nodes, 10)
    for i, node in enumerate(gone):
        (ov.leave if i % 2 else ov.fail)(node)
    live = [n for n in nodes if n not in set(gone)]
    for _ in range(200):
        key = rng.getrandbits(128)
        path = ov.route(rng.choice(live), key)
        assert path.delivered
        assert path.terminal == brute_minimizer(key, live)
        assert not (set(path.hops) & set(gone))
    with pytest.raises(MembershipError):
        ov.leave(gone[0])
    with pytest.raises(MembershipError):
        ov.route(gone[0], 123)


def test_repair_removes_failed_references():
    ov, nodes = single_ring(64, seed=17)
    victim = nodes[10]
    witness = nodes[11]
    ov.fail(victim)
    st_ = ov.repair(witness, victim)
    assert victim not in st_.leaf_set
    assert victim not in [e for row in st_.level2 for e in row.values()]
    with pytest.raises(MembershipError):
        ov.repair(witness, nodes[12])  # still alive


# -- neighborhood and dumps ------------------------------------------------------


def test_neighborhood_set_is_proximity_sorted():
    rtts = {}

    def prox(a, b):
        key = (min(a, b), max(a, b))
        if key not in rtts:
            rtts[key] = random.Random(hash(key) & 0xFFFF).uniform(1, 100)
        return rtts[key]

    cfg = OverlayConfig(zone=ZoneConfig(zone_bits=0), neighborhood_size=4)
    rng = random.Random(18)
    nodes = [rng.getrandbits(128) for _ in range(30)]
    ov = Overlay(cfg, proximity=prox)
    ov.bootstrap(nodes)
    node = nodes[0]
    got = ov.neighborhood_set(node)
    want = sorted((x for x in nodes if x != node), key=lambda x: (prox(node, x), x))[:4]
    assert got == want


def test_dump_round_trip_has_no_violations():
    cfg = OverlayConfig(zone=ZoneConfig(zone_bits=8), fanout_bits=3, leaf_size=8)
    rng = random.Random(19)
    nodes = [make_node_id(z, rng.getrandbits(120), cfg.zone) for z in (0, 7, 30) for _ in range(15)]
    ov = Overlay(cfg)
    ov.bootstrap(nodes)
    text = ov.dump()
    assert verify_overlay_dump(text) == []


def test_dump_checker_flags_corruption():
    ov, nodes = single_ring(20, seed=20, leaf_size=8)
    text = ov.dump()
    lines = text.splitlines()
    parts = lines[1].split("\t")
    leafs = parts[2].split(",")
    leafs[0], leafs[-1] = leafs[-1], leafs[0]
    parts[2] = ",".join(leafs)
    corrupted = "\n".join([lines[0], "\t".join(parts)] + lines[2:]) + "\n"
    issues = verify_overlay_dump(corrupted)
    assert any("leaf set" in v for v in issues)
    assert verify_overlay_dump("") == ["missing header line"]


def test_dump_checker_flags_wrong_zone_claim():
    ov, nodes = single_ring(10, seed=21, leaf_size=8)
    text = ov.dump()
    lines = text.splitlines()
    parts = lines[3].split("\t")
    parts[1] = "77"
    bad = "\n".join(lines[:3] + ["\t".join(parts)] + lines[4:]) + "\n"
    assert any("zone" in v for v in verify_overlay_dump(bad))


# -- multiplexing ---------------------------------------------------------------


def test_multiplex_host_classes():
    hosts = [("small", 1), ("medium", 2), ("large", 4), ("xlarge", 8), ("xxlarge", 16)]
    out = multiplex_logical_nodes(hosts, unit=1)
    assert [len(out[h]) for h, _ in hosts] == [1, 2, 4, 8, 16]
    again = multiplex_logical_nodes(hosts, unit=1)
    assert out == again  # deterministic ids
    assert len({n for ids in out.values() for n in ids}) == 31


def test_multiplex_unit_rounding_and_minimum():
    out = multiplex_logical_nodes([("a", 8), ("b", 1)], unit=2)
    assert len(out["a"]) == 4
    assert len(out["b"]) == 1
    with pytest.raises(RangeError):
        multiplex_logical_nodes([("a", 1)], unit=0)


def test_multiplex_zone_pinning():
    cfg = ZoneConfig(zone_bits=8)
    out = multiplex_logical_nodes(
        [("h1", 4)], unit=1, zone_for_host=lambda h: 42, cfg=cfg)
    assert all(n >> cfg.suffix_bits == 42 for n in out["h1"])
