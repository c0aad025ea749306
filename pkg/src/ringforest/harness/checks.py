"""Offline validators: overlay dump checks and routing-history evaluation."""

from __future__ import annotations

from collections import Counter, defaultdict

from ..errors import ConfigError
from ..game import nash_gap
from .metrics import parse_csv
from .scenario import Scenario


def check_overlay_dump(data: dict) -> list[str]:
    """Structural problems in an overlay dump; empty means the dump is sound.

    The dump format is what runs emit as overlay.json: the node list plus,
    per tree, the master, the (parent, child) edge list, and the
    subscribers.
    """
    problems = []
    if not isinstance(data, dict):
        return ["dump is not a mapping"]
    nodes = data.get("nodes")
    if not isinstance(nodes, list) or not nodes:
        return ["dump has no node list"]
    if len(set(nodes)) != len(nodes):
        problems.append("duplicate node ids")
    known = set(nodes)
    zone_bits = data.get("zone_bits")
    if not isinstance(zone_bits, int) or not 0 <= zone_bits <= 128:
        problems.append("zone_bits missing or out of range")
    for name, tree in sorted((data.get("trees") or {}).items()):
        master = tree.get("master")
        if master not in known:
            problems.append(f"{name}: master is not a known node")
            continue
        edges = [tuple(e) for e in tree.get("edges", [])]
        parents: dict[str, str] = {}
        children = defaultdict(set)
        ok = True
        for parent, child in edges:
            if parent not in known or child not in known:
                problems.append(f"{name}: edge touches an unknown node")
                ok = False
            if child in parents:
                problems.append(f"{name}: {child} has two parents")
                ok = False
            parents[child] = parent
            children[parent].add(child)
        if master in parents:
            problems.append(f"{name}: master appears as a child")
            ok = False
        if not ok:
            continue
        members = {master} | set(parents) | set(children)
        reached = set()
        frontier = [master]
        while frontier:
            cur = frontier.pop()
            if cur in reached:
                problems.append(f"{name}: cycle through {cur}")
                break
            reached.add(cur)
            frontier.extend(children[cur])
        if members - reached:
            problems.append(f"{name}: {len(members - reached)} members unreachable from master")
        subs = set(tree.get("subscribers", []))
        if subs - members:
            problems.append(f"{name}: subscribers outside the tree")
        for node in sorted(members - subs):
            if node != master and not children[node]:
                problems.append(f"{name}: childless forwarder {node}")
    return problems


def evaluate_history(packets_text: str, scenario: Scenario) -> list[tuple]:
    """Recompute the per-episode equilibrium gap from a routing history.

    Agents' played mixtures are estimated per episode from their empirical
    selection frequencies, then scored against the scenario's reward model.
    Returns (episode, gap, cum_gap, rounds, packets, gap_per_round) rows,
    matching the columns of regret.csv.
    """
    if scenario.game is None:
        raise ConfigError("scenario has no game section")
    model = scenario.game.reward.to_model()
    k = model.choices
    header, rows = parse_csv(packets_text)
    if header[:2] != ["episode", "node"] or "chosen" not in header:
        raise ConfigError("history is not a packets.csv file")
    chosen_col = header.index("chosen")
    by_episode: dict[int, dict[str, Counter]] = defaultdict(lambda: defaultdict(Counter))
    for row in rows:
        episode = int(row[0])
        choice = int(row[chosen_col])
        if not 0 <= choice < k:
            raise ConfigError(f"chosen hop {choice} outside the model's {k} choices")
        by_episode[episode][row[1]][choice] += 1
    out = []
    cum = 0.0
    total_rounds = 0
    for episode in sorted(by_episode):
        agents = by_episode[episode]
        mixtures = []
        rounds_ep = 0
        for node in sorted(agents):
            counts = agents[node]
            plays = sum(counts.values())
            rounds_ep = max(rounds_ep, plays)
            mixtures.append(tuple(counts[c] / plays for c in range(k)))
        gap = nash_gap(mixtures, model)
        cum += gap * rounds_ep
        total_rounds += rounds_ep
        out.append(
            (episode, gap, cum, total_rounds, total_rounds * len(mixtures), cum / total_rounds)
        )
    return out
