"""Scenario execution: one Scenario in, one deterministic MetricsBundle out.

The runner wires the pieces together: it builds the overlay from the
topology, plants the dataflow trees, drives event-based aggregation rounds
over the simulated network, injects churn with keepalive-delayed detection
and billed repair traffic, and finally plays the packet routing game with
the configured policy.  Every random draw comes from a stream named by the
scenario seed plus a purpose tag, so identical scenarios produce identical
bundles byte for byte.
"""

from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

from ..errors import ConfigError
from ..forest import Forest
from ..game import (
    EpsGreedyBandit,
    GameConfig,
    PolicyEngine,
    candidate_set,
    lift_engine,
    nash_gap,
    opt_assignment,
    subset_choices,
    theory_schedule,
)
from ..idspace import NodeId, make_node_id, to_hex
from ..netsim import US_PER_MS, LatencyRewardMap, Network
from ..overlay import Overlay
from .metrics import MetricsBundle, build_heatmap
from .scenario import Scenario
from .topology import BuiltTopology, build_topology


def _kb_bits(kb: float) -> float:
    return kb * 8000.0


@dataclass
class _NodeAgg:
    """Per-node aggregation state for one round."""

    expected: set
    acc_wv: float = 0.0
    acc_w: float = 0.0
    contributors: int = 0
    own_ready: bool = False
    sent: bool = False
    stragglers: int = 0


class _TreeDriver:
    """Event-driven federated rounds over one tree.

    Each round: the master pushes the payload down the tree edges, every
    subscriber computes and folds a weighted contribution, partial sums
    travel back up, and the master commits and replicates.  A per-node
    timer bounds how long an aggregator waits for its children; children
    that miss it are carried as stragglers.  Epoch tokens invalidate all
    in-flight closures when the master is replaced.
    """

    def __init__(self, runner: "_Runner", app, idx: int):
        self.r = runner
        self.app = app
        self.idx = idx
        self.epoch = 0
        self.round_no = 0
        self.agg: dict[NodeId, _NodeAgg] = {}
        self.round_start_us = 0
        self.done = False

    # -- round lifecycle ----------------------------------------------------

    def start_round(self) -> None:
        if self.round_no >= self.r.scn.workload.rounds:
            self.done = True
            return
        self.round_no += 1
        self.agg = {}
        self.round_start_us = self.r.net.now
        self.r.trace_event("round_start", f"tree={self.idx} round={self.round_no}")
        master = self.r.forest.tree(self.app).master
        self._payload_arrived(master, self.epoch)

    def resume(self, committed_round: int) -> None:
        """Restart the chain after a master replacement."""
        self.epoch += 1
        self.round_no = committed_round
        self.done = False
        self.start_round()

    # -- downstream payload ---------------------------------------------------

    def _payload_arrived(self, node: NodeId, epoch: int) -> None:
        if epoch != self.epoch or node in self.r.dead:
            return
        tree = self.r.forest.tree(self.app)
        st = tree.members.get(node)
        if st is None:
            return
        kids = {c for c in st.children if c not in self.r.dead}
        agg = _NodeAgg(expected=set(kids))
        self.agg[node] = agg
        payload = _kb_bits(self.r.scn.workload.payload_kb)
        for child in sorted(kids):
            self.r.send(
                node,
                child,
                payload,
                lambda t, f, c=child: self._payload_arrived(c, epoch),
            )
        if st.subscriber:
            compute_us = int(self.r.scn.workload.compute_ms * US_PER_MS)
            self.r.net.after(compute_us, lambda: self._own_ready(node, epoch))
        else:
            agg.own_ready = True
        if kids:
            timeout_us = int(self.r.scn.workload.agg_timeout_ms * US_PER_MS)
            self.r.net.after(timeout_us, lambda: self._deadline(node, epoch))
        elif agg.own_ready:
            # childless forwarder: nothing to wait for
            self._maybe_complete(node, epoch)

    # -- upstream folds -------------------------------------------------------

    def _own_ready(self, node: NodeId, epoch: int) -> None:
        if epoch != self.epoch or node in self.r.dead:
            return
        agg = self.agg.get(node)
        if agg is None or agg.sent:
            return
        value, weight = self.r.contribution(self.idx, self.round_no, node)
        agg.acc_wv += weight * value
        agg.acc_w += weight
        agg.contributors += 1
        agg.own_ready = True
        self._maybe_complete(node, epoch)

    def _partial_arrived(
        self, node: NodeId, child: NodeId, wv: float, w: float, contributors: int, epoch: int
    ) -> None:
        if epoch != self.epoch or node in self.r.dead:
            return
        agg = self.agg.get(node)
        if agg is None or agg.sent:
            return  # arrived after the deadline: carried to the next round
        agg.expected.discard(child)
        agg.acc_wv += wv
        agg.acc_w += w
        agg.contributors += contributors
        self._maybe_complete(node, epoch)

    def _maybe_complete(self, node: NodeId, epoch: int) -> None:
        agg = self.agg[node]
        if agg.sent or not agg.own_ready or agg.expected:
            return
        self._send_up(node, epoch)

    def _deadline(self, node: NodeId, epoch: int) -> None:
        if epoch != self.epoch or node in self.r.dead:
            return
        agg = self.agg.get(node)
        if agg is None or agg.sent:
            return
        agg.stragglers = len(agg.expected)
        agg.expected.clear()
        if agg.stragglers:
            self.r.trace_event(
                "stragglers", f"tree={self.idx} round={self.round_no} node={to_hex(node)}"
            )
        if agg.own_ready:
            self._send_up(node, epoch)
        # a compute slower than the timeout is a scenario bug; leave pending

    def _send_up(self, node: NodeId, epoch: int) -> None:
        agg = self.agg[node]
        agg.sent = True
        tree = self.r.forest.tree(self.app)
        if node == tree.master:
            self._commit(agg)
            return
        st = tree.members.get(node)
        if st is None or st.parent is None:
            return  # regrafted away mid-round; its data is lost for this round
        parent = st.parent
        self.r.send(
            node,
            parent,
            _kb_bits(self.r.scn.workload.update_kb),
            lambda t, f: self._partial_arrived(
                parent, node, agg.acc_wv, agg.acc_w, agg.contributors, epoch
            ),
        )

    def _commit(self, agg: _NodeAgg) -> None:
        value = agg.acc_wv / agg.acc_w if agg.acc_w > 0 else 0.0
        state = {"round": self.round_no, "value": value, "weight": agg.acc_w}
        replicas = self.r.forest.snapshot_round(self.app, self.round_no, state)
        master = self.r.forest.tree(self.app).master
        for rep in replicas:
            self.r.send(master, rep, _kb_bits(self.r.scn.workload.state_kb))
        stragglers = sum(a.stragglers for a in self.agg.values())
        self.r.rounds_rows.append(
            (
                self.idx,
                self.round_no,
                self.round_start_us / US_PER_MS,
                self.r.net.now / US_PER_MS,
                agg.contributors,
                stragglers,
                value,
                agg.acc_w,
            )
        )
        self.r.trace_event("commit", f"tree={self.idx} round={self.round_no}")
        self.start_round()


class _Runner:
    def __init__(self, scn: Scenario, policy: Optional[str], trace: bool):
        self.scn = scn
        self.policy = policy or (scn.game.policy if scn.game else "algorithm1")
        self.trace = trace
        self.dead: set[NodeId] = set()
        self.lost_sends = 0
        self.rounds_rows: list[tuple] = []
        self.recovery_rows: list[tuple] = []
        self.events: list[tuple] = []
        self.drivers: dict = {}
        self.bundle = MetricsBundle(scenario=scn, policy=self.policy)

    # -- shared helpers -----------------------------------------------------

    def trace_event(self, kind: str, detail: str) -> None:
        if self.trace:
            self.events.append((self.net.now, kind, detail))

    def send(self, src: NodeId, dst: NodeId, bits: float, on_delivered=None, tag=None):
        """Transmit unless either endpoint is dead; dead traffic is dropped."""
        if src in self.dead or dst in self.dead:
            self.lost_sends += 1
            return None
        return self.net.transmit(src, dst, bits, on_delivered, tag)

    def chain(self, hops: Sequence[NodeId], bits: float, done) -> None:
        """Store-and-forward along hops; aborts at the first dead hop."""
        hops = list(hops)

        def step(i: int) -> None:
            if i + 1 >= len(hops):
                done(False)
                return
            if hops[i] in self.dead or hops[i + 1] in self.dead:
                done(True)
                return
            self.net.transmit(hops[i], hops[i + 1], bits, lambda t, f: step(i + 1))

        step(0)

    def contribution(self, tree_idx: int, round_no: int, node: NodeId) -> tuple[float, float]:
        """Per (tree, round, node) value and weight, independent of event order."""
        rng = random.Random(f"{self.scn.seed}:contrib:{tree_idx}:{round_no}:{to_hex(node)}")
        return rng.random(), 1.0 + rng.random()

    # -- phases --------------------------------------------------------------

    def run(self) -> MetricsBundle:
        topo_rng = random.Random(f"{self.scn.seed}:topology")
        self.built: BuiltTopology = build_topology(
            self.scn.topology, self.scn.overlay, self.scn.hosts, topo_rng
        )
        self.overlay = Overlay(self.built.cfg, self.built.proximity)
        self.overlay.bootstrap(self.built.nodes)

        prox = self.built.proximity
        self.net = Network(
            default_bandwidth_mbps=self.scn.default_bandwidth_mbps,
            propagation_us=lambda a, b: int(round(prox(a, b) / 2 * US_PER_MS)),
            host_of=self.built.host_of,
        )
        if self.built.host_bandwidth:
            host_of = self.built.host_of or (lambda n: n)
            for node in self.built.nodes:
                bw = self.built.host_bandwidth[host_of(node)]
                if bw != self.scn.default_bandwidth_mbps:
                    self.net.set_bandwidth(node, bw)

        self.forest = Forest(self.overlay, replica_count=self.scn.replicas)
        self._plant_trees()
        self._schedule_churn()
        for driver in self.drivers.values():
            driver.start_round()
        self.net.run()

        self._game_phase()
        self._emit_files()
        self._validity()
        self.bundle.finalize()
        return self.bundle

    def _plant_trees(self) -> None:
        wrng = random.Random(f"{self.scn.seed}:workload")
        w = self.scn.workload
        self.trees = []
        self.depths: list[list[int]] = []
        nodes = self.built.nodes
        for idx in range(w.trees):
            tree = self.forest.create_tree(f"model-{idx}")
            self.trees.append(tree)
            want = min(w.subscribers, len(nodes))
            picks = wrng.sample(nodes, want)
            depths = []
            for node in picks:
                res = self.forest.subscribe(node, tree.app)
                if res.accepted and res.depth is not None:
                    depths.append(res.depth)
            self.depths.append(depths)
            if w.rounds > 0:
                self.drivers[tree.app] = _TreeDriver(self, tree.app, idx)

    # -- churn ----------------------------------------------------------------

    def _schedule_churn(self) -> None:
        crng = random.Random(f"{self.scn.seed}:churn")
        for spec in self.scn.churn:
            t_us = spec.time_ms * US_PER_MS
            self.net.at(t_us, lambda s=spec: self._fire_churn(s, crng))

    def _resolve_target(self, target) -> Optional[NodeId]:
        if target == "master":
            return self.forest.tree(self.trees[0].app).master
        node = self.built.nodes[int(target) % len(self.built.nodes)]
        return node

    def _fire_churn(self, spec, crng: random.Random) -> None:
        if spec.kind == "join":
            node = self._fresh_node(crng)
            seeds = [n for n in self.overlay.nodes if n not in self.dead]
            if seeds:
                self.overlay.join(node, seed=seeds[0])
                self.trace_event("join", to_hex(node))
            return
        node = self._resolve_target(spec.target)
        if node is None or node in self.dead:
            return
        if spec.kind == "bandwidth":
            self.net.set_bandwidth(node, float(spec.value))
            self.trace_event("bandwidth", f"{to_hex(node)} -> {spec.value}")
            return
        # fail and leave both remove the node; leave skips the detection delay
        self.dead.add(node)
        self.net.cancel_flows(node)
        self.trace_event(spec.kind, to_hex(node))
        if spec.kind == "leave":
            self.overlay.leave(node)
            self._repair(node, detect_us=self.net.now)
        else:
            delay = self.scn.keepalive_period_ms * self.scn.keepalive_misses * US_PER_MS
            self.net.after(delay, lambda: self._detect(node))

    def _fresh_node(self, crng: random.Random) -> NodeId:
        cfg = self.built.cfg.zone
        span = 1 << cfg.suffix_bits
        existing = set(self.overlay.nodes) | self.dead
        zones = sorted({self.overlay.zone_of(n) for n in self.overlay.nodes}) or [0]
        while True:
            prefix = crng.choice(zones)
            candidate = make_node_id(prefix, crng.randrange(span), cfg)
            if candidate not in existing:
                return candidate

    def _detect(self, node: NodeId) -> None:
        if node in self.overlay:
            self.overlay.fail(node)
        self._repair(node, detect_us=self.net.now)

    def _repair(self, node: NodeId, detect_us: int) -> None:
        # the victim's parent (or a surviving child) must report the roster
        # change to the master, which tracks membership for aggregation
        parents: dict = {}
        for app in self.forest.apps:
            members = self.forest.tree(app).members
            if node in members:
                parents[app] = members[node].parent
        results = self.forest.repair_after_failure(node)
        control = _kb_bits(self.scn.workload.control_kb)
        state_bits = _kb_bits(self.scn.workload.state_kb)
        chains: list[tuple[list[NodeId], float]] = []
        contacted: set[NodeId] = set()
        resumes: list[tuple] = []
        for app, res in results.items():
            for path in res.routes:
                if len(path.hops) > 1:
                    chains.append((path.hops, control))
                contacted.update(path.hops)
            contacted.update(parent for _, parent in res.regrafts)
            if res.master_changed and res.new_master is not None:
                contacted.add(res.new_master)
                tree = self.forest.tree(app)
                live_sources = sorted(r for r in tree.replicas if r not in self.dead)
                if res.restored_round is not None and live_sources:
                    source = live_sources[0]
                    contacted.add(source)
                    chains.append(([source, res.new_master], state_bits))
                driver = self.drivers.get(app)
                if driver is not None:
                    resumes.append((driver, tree.round_no))
            else:
                reporter = parents.get(app)
                if reporter is None or reporter in self.dead:
                    live_kids = [c for c, _ in res.regrafts if c not in self.dead]
                    reporter = live_kids[0] if live_kids else None
                if reporter is not None and reporter in self.overlay:
                    path = self.overlay.route(reporter, app)
                    if path.delivered:
                        contacted.update(path.hops)
                        if len(path.hops) > 1:
                            chains.append((path.hops, control))
        contacted.discard(node)

        state = {"left": len(chains), "aborted": 0}

        def chain_done(aborted: bool) -> None:
            state["left"] -= 1
            state["aborted"] += int(aborted)
            if state["left"] == 0:
                finish()

        def finish() -> None:
            self.recovery_rows.append(
                (
                    detect_us / US_PER_MS,
                    self.net.now / US_PER_MS,
                    (self.net.now - detect_us) / US_PER_MS,
                    len(results),
                    len(chains),
                    len(contacted),
                    state["aborted"],
                    to_hex(node),
                )
            )
            self.trace_event("repair_done", to_hex(node))
            for driver, committed in resumes:
                driver.resume(committed)

        if not chains:
            finish()
            return
        # route chains carry control messages; the replica restore carries state
        for hops, bits in chains:
            self.chain(hops, bits, chain_done)

    # -- the packet game -------------------------------------------------------

    def _game_phase(self) -> None:
        g = self.scn.game
        if g is None:
            return
        tree = self.trees[0]
        pool = sorted(n for n in tree.subscribers if n not in self.dead)
        if g.agents is not None:
            pool = pool[: g.agents]
        if not pool:
            raise ConfigError("no live subscribers to act as packet sources")
        n = len(pool)
        k = g.choices
        master = tree.master
        prox = self.built.proximity
        others = [
            x
            for x in self.overlay.nodes
            if x != master and x not in self.dead and x not in set(pool)
        ]
        others.sort(key=lambda x: (prox(x, master), x))
        relays = others[:k]
        if len(relays) < k:  # tiny topologies: let agents double as relays
            fill = [x for x in pool if x not in relays]
            relays = (relays + fill)[:k]
        if len(relays) < k:
            raise ConfigError(f"need {k} relay nodes, topology offers {len(relays)}")

        model = g.reward.to_model()
        grng = random.Random(f"{self.scn.seed}:game")
        rounds_total = max(1, math.ceil(g.packets / n))

        engines: list = []
        assignment: list[int] = []
        subsets: list[tuple[int, ...]] = []
        if self.policy == "algorithm1":
            cfg = (
                theory_schedule(n, k)
                if g.schedule == "theory"
                else GameConfig(
                    alpha=g.alpha, beta=g.beta, tau=g.tau, design=g.design, floor=g.floor
                )
            )
            cands = candidate_set(k, g.grid, g.floor, g.max_candidates)
            engines = [PolicyEngine(cands, cfg) for _ in range(n)]
            tau = cfg.tau
        elif self.policy == "bandit":
            engines = [EpsGreedyBandit(k, g.eps) for _ in range(n)]
            tau = g.tau
        elif self.policy == "opt":
            loads_opt, _ = opt_assignment(n, model)
            assignment = [c for c in range(k) for _ in range(loads_opt[c])]
            tau = g.tau
        elif self.policy == "multicast":
            cfg = GameConfig(
                alpha=g.alpha, beta=g.beta, tau=g.tau, design=g.design, floor=g.floor
            )
            subsets = subset_choices(k)
            engines = [
                lift_engine(k, cfg, grid=g.grid, max_candidates=g.max_candidates)
                for _ in range(n)
            ]
            tau = cfg.tau
        else:
            raise ConfigError(f"unknown policy {self.policy!r}")

        reward_map = LatencyRewardMap(floor_us=self.scn.lmax_floor_ms * US_PER_MS)
        packet_bits = _kb_bits(g.packet_kb)

        packet_rows: list[tuple] = []
        regret_rows: list[tuple] = []
        heat_samples: list[tuple[int, int]] = []
        hop_counts = [0] * k
        per_agent_counts = [[0] * k for _ in range(n)]
        self.reward_map = reward_map

        def hop_mixture(i: int) -> tuple[float, ...]:
            if self.policy == "algorithm1":
                # the engine's policy is already a distribution over hops
                return tuple(engines[i].policy)
            if self.policy == "opt":
                one = [0.0] * k
                one[assignment[i]] = 1.0
                return tuple(one)
            return ()  # bandit and multicast mixtures come from play counts

        def subset_marginals(i: int) -> tuple[float, ...]:
            # marginal probability that hop h appears in the chosen subset
            marg = [0.0] * k
            for w, subset in zip(engines[i].policy, subsets):
                for h in subset:
                    marg[h] += w
            return tuple(marg)

        played = 0
        cum_gap = 0.0
        episode = 0
        while played < rounds_total:
            episode += 1
            ep_rounds = min(tau, rounds_total - played)
            ep_mixtures: list[tuple[float, ...]] = [hop_mixture(i) for i in range(n)]
            ep_counts = [[0] * k for _ in range(n)]
            for _ in range(ep_rounds):
                played += 1
                if self.policy == "opt":
                    choices = list(assignment)
                elif self.policy == "multicast":
                    choices = [e.select(grng) for e in engines]
                else:
                    choices = [e.select(grng) for e in engines]
                if self.policy == "multicast":
                    base_loads: Counter = Counter()
                    for c in choices:
                        base_loads.update(subsets[c])
                    per_hop_r = [
                        model.sample(h, base_loads[h], grng) if base_loads[h] else 0.0
                        for h in range(k)
                    ]
                    for i, c in enumerate(choices):
                        r = sum(per_hop_r[h] for h in subsets[c]) / k
                        engines[i].record(c, r)
                        for h in subsets[c]:
                            hop_counts[h] += 1
                            per_agent_counts[i][h] += 1
                            heat_samples.append((played - 1, h))
                        marg = subset_marginals(i)
                        packet_rows.append(
                            (episode, to_hex(pool[i])) + marg + (c, r)
                        )
                    continue
                loads = Counter(choices)
                rewards = self._round_rewards(
                    g, model, grng, pool, relays, choices, loads, packet_bits, reward_map
                )
                for i, (c, r) in enumerate(zip(choices, rewards)):
                    if self.policy in ("algorithm1", "bandit"):
                        engines[i].record(c, r)
                    hop_counts[c] += 1
                    per_agent_counts[i][c] += 1
                    ep_counts[i][c] += 1
                    heat_samples.append((played - 1, c))
                    mix = ep_mixtures[i] if ep_mixtures[i] else ()
                    if not mix:
                        freq = [0.0] * k
                        freq[c] = 1.0
                        mix = tuple(freq)
                    packet_rows.append((episode, to_hex(pool[i])) + mix + (c, r))
            if self.policy != "multicast" and g.reward_source == "model":
                gap_mixtures: list[Sequence[float]] = []
                for i in range(n):
                    if ep_mixtures[i]:
                        gap_mixtures.append(ep_mixtures[i])
                    else:
                        total = sum(ep_counts[i]) or 1
                        gap_mixtures.append(tuple(c / total for c in ep_counts[i]))
                gap = nash_gap(gap_mixtures, model)
                cum_gap += gap * ep_rounds
                regret_rows.append(
                    (
                        episode,
                        gap,
                        cum_gap,
                        played,
                        played * n,
                        cum_gap / played,
                    )
                )
            if self.policy in ("algorithm1", "multicast"):
                for e in engines:
                    e.end_episode()
            if g.reward_source == "latency":
                reward_map.roll_episode()

        self.bundle.data["hop_counts"] = hop_counts
        self.bundle.data["per_agent_counts"] = per_agent_counts
        self.bundle.data["regret"] = regret_rows
        self.bundle.data["agents"] = [to_hex(p) for p in pool]
        self.bundle.data["relays"] = [to_hex(r) for r in relays]
        self.bundle.data["episodes"] = episode
        self._packet_rows = packet_rows
        self._regret_rows = regret_rows
        self._heat = build_heatmap(heat_samples, k)

    def _round_rewards(
        self, g, model, grng, pool, relays, choices, loads, packet_bits, reward_map
    ) -> list[float]:
        if g.reward_source == "model":
            return [model.sample(c, loads[c], grng) for c in choices]
        latencies: dict[int, float] = {}
        for i, c in enumerate(choices):
            t0 = self.net.now

            def arrived(t, f, i=i, t0=t0):
                latencies[i] = t - t0

            flow = self.send(pool[i], relays[c], packet_bits, arrived)
            if flow is None:
                latencies[i] = reward_map.l_max_us  # dropped packet: worst case
        self.net.run()
        return [reward_map.reward(latencies[i]) for i in range(len(choices))]

    # -- outputs -----------------------------------------------------------

    def _emit_files(self) -> None:
        b = self.bundle
        w = self.scn.workload
        master_rows = []
        for idx, tree in enumerate(self.trees):
            subs = tree.subscribers
            depths = [tree.depth_of(s) for s in subs if s in tree.members]
            master_rows.append(
                (
                    idx,
                    tree.name,
                    to_hex(tree.app),
                    to_hex(tree.master),
                    len(tree.members),
                    len(subs),
                    max(depths) if depths else 0,
                    tree.round_no,
                )
            )
        b.add_csv(
            "masters.csv",
            ["tree", "name", "app", "master", "members", "subscribers", "max_depth", "round"],
            master_rows,
        )
        b.add_csv(
            "rounds.csv",
            [
                "tree",
                "round",
                "start_ms",
                "commit_ms",
                "contributors",
                "stragglers",
                "value",
                "weight",
            ],
            self.rounds_rows,
        )
        b.add_csv(
            "recovery.csv",
            [
                "detect_ms",
                "complete_ms",
                "recovery_ms",
                "trees",
                "chains",
                "nodes_contacted",
                "aborted_chains",
                "failed",
            ],
            self.recovery_rows,
        )
        traffic_rows = sorted(
            (to_hex(node), self.net.bits_sent.get(node, 0.0), self.net.bits_received.get(node, 0.0))
            for node in set(self.net.bits_sent) | set(self.net.bits_received)
        )
        b.add_csv("traffic.csv", ["node", "bits_sent", "bits_received"], traffic_rows)

        g = self.scn.game
        if g is not None:
            k = g.choices
            policy_cols = [f"policy_{h}" for h in range(k)]
            b.add_csv(
                "packets.csv",
                ["episode", "node"] + policy_cols + ["chosen", "reward"],
                self._packet_rows,
            )
            b.add_matrix("heatmap.csv", self._heat)
            if self._regret_rows:
                b.add_csv(
                    "regret.csv",
                    ["episode", "gap", "cum_gap", "rounds", "packets", "gap_per_round"],
                    self._regret_rows,
                )
        b.add_text("overlay.json", self._overlay_dump())
        if self.trace:
            b.add_csv(
                "events.csv",
                ["time_us", "kind", "detail"],
                self.events,
            )
        b.data["rounds"] = self.rounds_rows
        b.data["recovery"] = self.recovery_rows
        b.data["depths"] = self.depths
        b.data["lost_sends"] = self.lost_sends

    def _overlay_dump(self) -> str:
        import json

        trees = {}
        for tree in self.trees:
            trees[tree.name] = {
                "app": to_hex(tree.app),
                "master": to_hex(tree.master),
                "edges": self.forest.edge_list(tree.app),
                "subscribers": sorted(to_hex(s) for s in tree.subscribers),
            }
        return json.dumps(
            {
                "zone_bits": self.built.cfg.zone.zone_bits,
                "nodes": sorted(to_hex(n) for n in self.overlay.nodes),
                "trees": trees,
            },
            indent=2,
            sort_keys=True,
        ) + "\n"

    # -- validity ----------------------------------------------------------

    def _validity(self) -> None:
        v = self.bundle.validity
        problems = []
        for tree in self.trees:
            problems.extend(self.forest.check_tree(tree.app))
        v["trees"] = not problems
        if problems:
            self.bundle.notes.extend(problems[:20])
        net = self.net
        v["flow_conservation"] = (
            net.flows_started == net.flows_completed + net.flows_cancelled
        )
        g = self.scn.game
        if g is not None and g.reward_source == "latency":
            total = len(self._packet_rows) or 1
            v["reward_clipping"] = self.reward_map.clip_count / total <= 0.01
        else:
            v["reward_clipping"] = True
        v["zone_rtt"] = self._zone_rtt_ok()
        if not all(v.values()):
            self.bundle.notes.append("validity check failed: " + ", ".join(
                name for name, ok in sorted(v.items()) if not ok
            ))

    def _zone_rtt_ok(self) -> bool:
        """Intra-zone RTT stays under the zone diameter for >= 95% of pairs."""
        cfg = self.built.cfg.zone
        if cfg.zone_bits == 0:
            return True
        rng = random.Random(f"{self.scn.seed}:validity")
        by_zone: dict[int, list[NodeId]] = {}
        for node in self.overlay.nodes:
            by_zone.setdefault(self.overlay.zone_of(node), []).append(node)
        pairs = []
        zones = [z for z, members in by_zone.items() if len(members) >= 2]
        if not zones:
            return True
        for _ in range(200):
            zone = rng.choice(zones)
            a, b = rng.sample(by_zone[zone], 2)
            pairs.append((a, b))
        ok = sum(
            1 for a, b in pairs if self.built.proximity(a, b) <= self.scn.topology.diameter_ms
        )
        return ok / len(pairs) >= 0.95


def run_scenario(
    scenario: Scenario, policy: Optional[str] = None, trace: bool = False
) -> MetricsBundle:
    """Execute a scenario and return its finalized metrics bundle.

    ``policy`` overrides the scenario's routing policy; ``trace`` adds an
    events.csv with round, churn, and repair markers.
    """
    return _Runner(scenario, policy, trace).run()
