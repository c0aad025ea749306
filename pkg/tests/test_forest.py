"""Tree membership, dissemination, aggregation, and recovery tests."""

import random

import pytest

from ringforest.errors import (
    MembershipError,
    RangeError,
    UnrecoverableStateError,
)
from ringforest.forest import DIRECTORY_TREE_NAME, Forest
from ringforest.idspace import app_id
from ringforest.overlay import ring_minimizer

from conftest import build_ring


def make_forest(n=60, seed=3):
    overlay = build_ring(n, seed=seed)
    return overlay, Forest(overlay)


def subscribe_many(forest, app, nodes):
    for node in nodes:
        res = forest.subscribe(node, app)
        assert res.accepted, res.reason


def test_master_is_ring_minimizer_and_advertised():
    overlay, forest = make_forest()
    tree = forest.create_tree("training/job-1")
    assert tree.master == ring_minimizer(tree.app, overlay.nodes)
    assert forest.discover("training/job-1") == (tree.app, tree.master)
    assert "training/job-1" in forest.directory()


def test_directory_tree_is_implicit_and_unlisted():
    _, forest = make_forest()
    forest.create_tree("anything")
    assert DIRECTORY_TREE_NAME not in forest.directory()
    assert forest.discover("missing") is None


def test_subscribe_builds_consistent_tree():
    overlay, forest = make_forest(80, seed=5)
    tree = forest.create_tree("job")
    members = random.Random(11).sample(overlay.nodes, 30)
    subscribe_many(forest, tree.app, members)
    assert forest.check_tree(tree.app) == []
    for node in members:
        assert tree.members[node].subscriber
        # parent chain terminates at the master
        assert tree.depth_of(node) <= len(tree.members)


def test_subscribe_depth_matches_join_route():
    overlay, forest = make_forest(80, seed=7)
    tree = forest.create_tree("depth-check")
    first = overlay.nodes[10]
    res = forest.subscribe(first, tree.app)
    # First join grafts its whole route: depth equals the route hop count.
    assert res.depth == res.route.hop_count
    # A later join can only be as deep as its own route.
    second = overlay.nodes[40]
    res2 = forest.subscribe(second, tree.app)
    assert res2.depth <= res2.route.hop_count


def test_subscribe_idempotent_and_forwarder_upgrade():
    overlay, forest = make_forest(60, seed=9)
    tree = forest.create_tree("job")
    subscribe_many(forest, tree.app, random.Random(2).sample(overlay.nodes, 25))
    forwarders = [
        n for n, st in tree.members.items()
        if not st.subscriber and n != tree.master
    ]
    if forwarders:
        res = forest.subscribe(forwarders[0], tree.app)
        assert res.accepted and res.grafted_edges == []
        assert tree.members[forwarders[0]].subscriber
    node = tree.subscribers[0]
    before = len(tree.members)
    res = forest.subscribe(node, tree.app)
    assert res.accepted and len(tree.members) == before


def test_selector_rejects_mismatched_subscriber():
    overlay, forest = make_forest()
    tree = forest.create_tree(
        "gpu-only", selector=lambda node, attrs: attrs.get("gpu", False)
    )
    node = overlay.nodes[5]
    refused = forest.subscribe(node, tree.app)
    assert not refused.accepted and "selector" in refused.reason
    assert node not in tree.members
    granted = forest.subscribe(node, tree.app, attributes={"gpu": True})
    assert granted.accepted


def test_broadcast_reaches_every_subscriber_exactly_once():
    overlay, forest = make_forest(90, seed=13)
    tree = forest.create_tree("fanout")
    members = random.Random(4).sample(overlay.nodes, 40)
    subscribe_many(forest, tree.app, members)
    out = forest.broadcast(tree.app)
    assert sorted(out.deliveries) == tree.subscribers
    for node, depth in out.deliveries.items():
        assert depth == tree.depth_of(node)
    assert out.max_depth >= max(out.deliveries.values())
    assert len(out.edges) == len(tree.members) - 1


def test_aggregate_weighted_mean_matches_direct_fold():
    overlay, forest = make_forest(70, seed=17)
    tree = forest.create_tree("agg")
    rng = random.Random(6)
    members = rng.sample(overlay.nodes, 20)
    subscribe_many(forest, tree.app, members)
    contributions = {n: (rng.uniform(-5, 5), rng.uniform(0.1, 3.0)) for n in members}
    out = forest.aggregate(tree.app, contributions)
    expected = sum(v * w for v, w in contributions.values()) / sum(
        w for _, w in contributions.values()
    )
    assert out.value == pytest.approx(expected, rel=1e-12)
    assert out.weight == pytest.approx(sum(w for _, w in contributions.values()))
    assert out.folds == len(contributions) - 1
    assert len(out.up_edges) <= len(tree.members) - 1


def test_aggregate_vector_contributions():
    overlay, forest = make_forest(40, seed=19)
    tree = forest.create_tree("vec")
    rng = random.Random(8)
    members = rng.sample(overlay.nodes, 8)
    subscribe_many(forest, tree.app, members)
    contributions = {
        n: ([rng.uniform(0, 1) for _ in range(3)], rng.uniform(0.5, 2.0))
        for n in members
    }
    out = forest.aggregate(tree.app, contributions)
    total_w = sum(w for _, w in contributions.values())
    for i in range(3):
        expected = sum(v[i] * w for v, w in contributions.values()) / total_w
        assert out.value[i] == pytest.approx(expected, rel=1e-12)


def test_aggregate_rejects_outsiders_and_zero_weight():
    overlay, forest = make_forest(40, seed=21)
    tree = forest.create_tree("strict")
    node = overlay.nodes[3]
    forest.subscribe(node, tree.app)
    outsider = next(n for n in overlay.nodes if n not in tree.members)
    with pytest.raises(MembershipError):
        forest.aggregate(tree.app, {outsider: (1.0, 1.0)})
    with pytest.raises(RangeError):
        forest.aggregate(tree.app, {node: (1.0, 0.0)})


def test_unsubscribe_prunes_forwarder_chain():
    overlay, forest = make_forest(90, seed=23)
    tree = forest.create_tree("prune")
    members = random.Random(14).sample(overlay.nodes, 30)
    subscribe_many(forest, tree.app, members)
    for node in members:
        forest.unsubscribe(node, tree.app)
    # With every subscription dropped the tree collapses to its master.
    assert set(tree.members) == {tree.master}
    assert forest.check_tree(tree.app) == []


def test_unsubscribe_keeps_shared_branches():
    overlay, forest = make_forest(90, seed=25)
    tree = forest.create_tree("shared")
    members = random.Random(15).sample(overlay.nodes, 25)
    subscribe_many(forest, tree.app, members)
    forest.unsubscribe(members[0], tree.app)
    assert forest.check_tree(tree.app) == []
    remaining = set(tree.subscribers)
    assert remaining == set(members[1:]) - {tree.master}  | (
        {tree.master} & set(members[1:])
    )
    out = forest.broadcast(tree.app)
    assert sorted(out.deliveries) == tree.subscribers


def test_snapshot_round_places_replicas_near_master():
    overlay, forest = make_forest(60, seed=27)
    tree = forest.create_tree("rounds")
    replicas = forest.snapshot_round(tree.app, 1, {"model": [1.0, 2.0]})
    assert len(replicas) == 2
    near = overlay.neighborhood_set(tree.master)
    assert replicas == near[:2]
    assert tree.replicas[replicas[0]][0] == 1
    with pytest.raises(RangeError):
        forest.snapshot_round(tree.app, 0, {})


def test_master_failure_recovers_state_from_replica():
    overlay, forest = make_forest(80, seed=29)
    tree = forest.create_tree("resilient")
    members = random.Random(16).sample(overlay.nodes, 30)
    subscribe_many(forest, tree.app, members)
    for rnd in (1, 2, 3):
        forest.snapshot_round(tree.app, rnd, {"round": rnd, "w": [0.1 * rnd]})
    old_master = tree.master
    overlay.fail(old_master)
    results = forest.repair_after_failure(old_master)
    rep = results[tree.app]
    assert rep.master_changed
    assert rep.new_master == tree.master
    assert tree.master == ring_minimizer(tree.app, overlay.nodes)
    assert rep.restored_round == 3
    assert tree.state == {"round": 3, "w": [0.1 * 3]}
    assert forest.check_tree(tree.app) == []
    survivors = [n for n in members if n != old_master]
    out = forest.broadcast(tree.app)
    assert set(survivors) <= set(out.deliveries)
    assert forest.discover("resilient") == (tree.app, tree.master)


def test_master_failure_without_replicas_is_unrecoverable():
    overlay, forest = make_forest(50, seed=31)
    tree = forest.create_tree("fragile")
    forest.snapshot_round(tree.app, 1, {"round": 1})
    for replica in list(tree.replicas):
        overlay.fail(replica)
        forest.repair_after_failure(replica)
    overlay.fail(tree.master)
    with pytest.raises(UnrecoverableStateError):
        forest.repair_after_failure(tree.master)


def test_worker_failure_regrafts_orphan_subtrees():
    overlay, forest = make_forest(100, seed=33)
    tree = forest.create_tree("workers")
    members = random.Random(18).sample(overlay.nodes, 45)
    subscribe_many(forest, tree.app, members)
    victim = max(
        (n for n in tree.members if n != tree.master),
        key=lambda n: len(tree.members[n].children),
    )
    orphan_count = len(tree.members[victim].children)
    assert orphan_count >= 1
    subscribers_before = set(tree.subscribers) - {victim}
    overlay.fail(victim)
    results = forest.repair_after_failure(victim)
    rep = results[tree.app]
    assert not rep.master_changed
    assert len(rep.regrafts) + len(rep.failed_regrafts) >= 1
    assert victim not in tree.members
    assert forest.check_tree(tree.app) == []
    out = forest.broadcast(tree.app)
    assert subscribers_before <= set(out.deliveries)


def test_concurrent_failures_recover_sequentially():
    overlay, forest = make_forest(120, seed=35)
    tree = forest.create_tree("batch")
    members = random.Random(20).sample(overlay.nodes, 60)
    subscribe_many(forest, tree.app, members)
    victims = [n for n in members if n != tree.master][:6]
    for v in victims:
        overlay.fail(v)
    for v in victims:
        forest.repair_after_failure(v)
    assert forest.check_tree(tree.app) == []
    alive = set(tree.subscribers)
    assert alive == set(members) - set(victims) - (
        {tree.master} - set(members)
    ) - ({tree.master} if tree.master not in members else set())
    out = forest.broadcast(tree.app)
    assert set(out.deliveries) == alive


def test_check_tree_flags_corruption():
    overlay, forest = make_forest(60, seed=37)
    tree = forest.create_tree("audit")
    members = random.Random(22).sample(overlay.nodes, 20)
    subscribe_many(forest, tree.app, members)
    node = next(n for n in tree.members if n != tree.master)
    tree.members[node].parent = node  # manufactured cycle
    issues = forest.check_tree(tree.app)
    assert issues != []


def test_edge_list_is_sorted_hex_pairs():
    overlay, forest = make_forest(50, seed=39)
    tree = forest.create_tree("edges")
    subscribe_many(forest, tree.app, random.Random(24).sample(overlay.nodes, 12))
    edges = forest.edge_list(tree.app)
    assert edges == sorted(edges)
    assert all(len(p) == 32 and len(c) == 32 for p, c in edges)
    assert len(edges) == len(tree.members) - 1
