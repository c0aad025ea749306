"""Zoned ring overlay.

Nodes are binned by landmark RTT profiles into zones (top ``m`` id bits).
Each node keeps a leaf set (numeric neighbours), level-1 zone fingers for
cross-zone hops, and level-2 prefix rows over the suffix digits (base 2**b)
for within-zone hops.  Routing is greedy: leaf span first, then a longer
suffix-prefix match, then the zone finger toward the key's zone.
"""

from __future__ import annotations

import bisect
import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from .errors import (
    AlreadyExistsError,
    BootstrapError,
    InvariantViolation,
    MembershipError,
    RangeError,
)
from .idspace import (
    ID_SPACE,
    NodeId,
    ZoneConfig,
    clockwise_distance,
    from_hex,
    make_node_id,
    ring_distance,
    split_node_id,
    stable_hash,
    to_hex,
)

# ---------------------------------------------------------------------------
# Landmark binning


@dataclass(frozen=True)
class Bin:
    """Landmark bin: ascending-RTT permutation plus per-landmark level vector."""

    permutation: tuple[int, ...]
    levels: tuple[int, ...]

    def label(self) -> str:
        return (
            "p" + ",".join(map(str, self.permutation))
            + "|l" + ",".join(map(str, self.levels))
        )


def bin_node(rtts: Sequence[float], thresholds: Sequence[float]) -> Bin:
    """Bin a node from its landmark RTT vector.

    The permutation orders landmark indexes by ascending RTT (ties by index);
    the level of each RTT is the number of thresholds at or below it.
    """
    if not rtts:
        raise RangeError("at least one landmark RTT is required")
    if any(r < 0 for r in rtts):
        raise RangeError("landmark RTTs must be non-negative")
    ts = sorted(thresholds)
    order = tuple(sorted(range(len(rtts)), key=lambda i: (rtts[i], i)))
    levels = tuple(sum(1 for t in ts if r >= t) for r in rtts)
    return Bin(order, levels)


def zone_for_bin(b: Bin, cfg: ZoneConfig) -> int:
    """Zone prefix for a bin: stable hash of its canonical label mod 2**m."""
    return stable_hash(b.label(), cfg.zone_count)


# ---------------------------------------------------------------------------
# Configuration and routing-state types


@dataclass(frozen=True)
class ZonePolicy:
    allow_egress: bool = True
    allow_ingress: bool = True


@dataclass(frozen=True)
class OverlayConfig:
    zone: ZoneConfig = ZoneConfig()
    fanout_bits: int = 4
    leaf_size: int = 24
    neighborhood_size: int = 8

    def __post_init__(self) -> None:
        if self.fanout_bits < 1:
            raise RangeError("fanout_bits must be >= 1")
        if self.leaf_size < 2 or self.leaf_size % 2:
            raise RangeError("leaf_size must be an even number >= 2")
        if self.neighborhood_size < 0:
            raise RangeError("neighborhood_size must be >= 0")

    @property
    def digit_count(self) -> int:
        n, b = self.zone.suffix_bits, self.fanout_bits
        return 0 if n == 0 else math.ceil(n / b)

    @property
    def digit_base(self) -> int:
        return 1 << self.fanout_bits


def level1_finger_target(prefix: int, i: int, cfg: ZoneConfig) -> int:
    """Target id of zone finger i: ((P + 2**(i-1)) mod 2**m) * 2**n."""
    if not 1 <= i <= cfg.zone_bits:
        raise RangeError(f"level-1 finger index {i} out of range [1, {cfg.zone_bits}]")
    zone = (prefix + (1 << (i - 1))) % cfg.zone_count
    return zone << cfg.suffix_bits


def level2_finger_target(suffix: int, i: int, cfg: ZoneConfig) -> int:
    """Target suffix of within-zone finger i: (S + 2**(i-1)) mod 2**n."""
    if not 1 <= i <= cfg.suffix_bits:
        raise RangeError(f"level-2 finger index {i} out of range [1, {cfg.suffix_bits}]")
    return (suffix + (1 << (i - 1))) % (1 << cfg.suffix_bits)


def suffix_digit(suffix: int, index: int, cfg: OverlayConfig) -> int:
    """Digit ``index`` (0 = most significant) of the zero-padded suffix."""
    d, b = cfg.digit_count, cfg.fanout_bits
    if not 0 <= index < d:
        raise RangeError(f"digit index {index} out of range [0, {d})")
    padded = suffix << (d * b - cfg.zone.suffix_bits)
    return (padded >> (b * (d - 1 - index))) & (cfg.digit_base - 1)


def common_digit_prefix(s1: int, s2: int, cfg: OverlayConfig) -> int:
    """Number of leading base-2**b digits shared by two suffixes."""
    for i in range(cfg.digit_count):
        if suffix_digit(s1, i, cfg) != suffix_digit(s2, i, cfg):
            return i
    return cfg.digit_count


@dataclass
class RoutingState:
    """Snapshot of one node's routing tables."""

    node: NodeId
    zone: int
    suffix: int
    leaf_set: list[NodeId]
    level1: list[Optional[NodeId]]
    level2: list[dict[int, NodeId]]
    neighborhood: list[NodeId] = field(default_factory=list)


@dataclass
class RoutePath:
    """Result of routing a key: the hop sequence and how it ended."""

    hops: list[NodeId]
    delivered: bool
    blocked: bool = False
    blocked_at: Optional[NodeId] = None
    reason: str = ""

    @property
    def terminal(self) -> NodeId:
        return self.hops[-1]

    @property
    def hop_count(self) -> int:
        return len(self.hops) - 1


def _closer(key: int, a: NodeId, b: NodeId) -> bool:
    """True when a is strictly closer to key than b (clockwise tie-break)."""
    da, db = ring_distance(a, key), ring_distance(b, key)
    if da != db:
        return da < db
    return clockwise_distance(key, a) < clockwise_distance(key, b)


def ring_minimizer(key: int, candidates: Iterable[NodeId]) -> NodeId:
    """Candidate closest to key on the ring, ties broken clockwise from key."""
    it = iter(candidates)
    try:
        best = next(it)
    except StopIteration:
        raise MembershipError("no candidates") from None
    for c in it:
        if _closer(key, c, best):
            best = c
    return best


def _pair_hash(a: NodeId, b: NodeId) -> int:
    lo, hi = (a, b) if a <= b else (b, a)
    digest = hashlib.sha1(lo.to_bytes(16, "big") + hi.to_bytes(16, "big")).digest()
    return int.from_bytes(digest[:8], "big")


def default_proximity(
    cfg: ZoneConfig, diameter_ms: float = 50.0, inter_zone_ms: float = 100.0
) -> Callable[[NodeId, NodeId], float]:
    """Deterministic pseudo-RTT oracle: short intra-zone, long cross-zone."""

    def rtt(a: NodeId, b: NodeId) -> float:
        if a == b:
            return 0.0
        h = _pair_hash(a, b)
        if (a >> cfg.suffix_bits) == (b >> cfg.suffix_bits):
            return 1.0 + (h % 1000) / 1000.0 * (diameter_ms - 1.0)
        return inter_zone_ms * (1.0 + 0.4 * (h % 1000) / 1000.0)

    return rtt


# ---------------------------------------------------------------------------
# Overlay


class Overlay:
    """Live membership plus routing over it.

    Routing tables are derived lazily from the full membership (this is a
    simulator, so every node's view is consistent) and cached; any membership
    change invalidates the cache.
    """

    def __init__(
        self,
        cfg: OverlayConfig = OverlayConfig(),
        proximity: Optional[Callable[[NodeId, NodeId], float]] = None,
    ):
        self.cfg = cfg
        self.proximity = proximity or default_proximity(cfg.zone)
        self._ring: list[NodeId] = []
        self._zone_members: dict[int, list[int]] = {}
        self._live: set[NodeId] = set()
        self._policies: dict[int, ZonePolicy] = {}
        self._states: dict[NodeId, RoutingState] = {}
        self.epoch = 0

    # -- membership ---------------------------------------------------------

    def __contains__(self, node: NodeId) -> bool:
        return node in self._live

    def __len__(self) -> int:
        return len(self._ring)

    @property
    def nodes(self) -> list[NodeId]:
        return list(self._ring)

    def zone_of(self, node: NodeId) -> int:
        return node >> self.cfg.zone.suffix_bits

    def bootstrap(self, nodes: Iterable[NodeId]) -> None:
        """Bulk-insert the initial membership (no seed protocol)."""
        for node in nodes:
            self._insert(node)
        self._invalidate()

    def join(self, node: NodeId, seed: Optional[NodeId] = None) -> None:
        """Admit a node through a live seed (seed unneeded for the first node)."""
        if node in self._live:
            raise AlreadyExistsError(f"node {to_hex(node)} already joined")
        if self._ring:
            if seed is None or seed not in self._live:
                raise BootstrapError(
                    f"seed {to_hex(seed) if seed is not None else '<none>'} is not alive"
                )
        self._insert(node)
        self._invalidate()

    def leave(self, node: NodeId) -> None:
        """Graceful departure; peers are repaired immediately."""
        self._remove(node)
        self._invalidate()

    def fail(self, node: NodeId) -> None:
        """Abrupt departure; structurally identical, detection is the
        timed layer's concern."""
        self._remove(node)
        self._invalidate()

    def repair(self, node: NodeId, failed_peer: NodeId) -> RoutingState:
        """Rebuild one node's tables after a peer failure."""
        if node not in self._live:
            raise MembershipError(f"node {to_hex(node)} is not alive")
        if failed_peer in self._live:
            raise MembershipError(f"peer {to_hex(failed_peer)} is still alive")
        self._states.pop(node, None)
        return self.build_routing_state(node)

    def _insert(self, node: NodeId) -> None:
        if not 0 <= node < ID_SPACE:
            raise RangeError(f"id {node} outside the 128-bit space")
        if node in self._live:
            raise AlreadyExistsError(f"node {to_hex(node)} already joined")
        self._live.add(node)
        bisect.insort(self._ring, node)
        zone, suffix = split_node_id(node, self.cfg.zone)
        bisect.insort(self._zone_members.setdefault(zone, []), suffix)

    def _remove(self, node: NodeId) -> None:
        if node not in self._live:
            raise MembershipError(f"node {to_hex(node)} is not a member")
        self._live.discard(node)
        idx = bisect.bisect_left(self._ring, node)
        self._ring.pop(idx)
        zone, suffix = split_node_id(node, self.cfg.zone)
        members = self._zone_members[zone]
        members.pop(bisect.bisect_left(members, suffix))
        if not members:
            del self._zone_members[zone]

    def _invalidate(self) -> None:
        self._states.clear()
        self.epoch += 1

    # -- zone policy ---------------------------------------------------------

    def set_zone_policy(self, zone: int, policy: ZonePolicy) -> None:
        if not 0 <= zone < self.cfg.zone.zone_count:
            raise RangeError(f"zone {zone} out of range")
        self._policies[zone] = policy

    def zone_policy(self, zone: int) -> ZonePolicy:
        return self._policies.get(zone, ZonePolicy())

    # -- routing-state construction ------------------------------------------

    def _leaf_set(self, node: NodeId) -> list[NodeId]:
        ring = self._ring
        n = len(ring)
        if n <= 1:
            return []
        half = self.cfg.leaf_size // 2
        idx = bisect.bisect_left(ring, node)
        if n - 1 <= self.cfg.leaf_size:
            leaves = [x for x in ring if x != node]
        else:
            leaves = [ring[(idx + k) % n] for k in range(1, half + 1)]
            leaves += [ring[(idx - k) % n] for k in range(1, half + 1)]
        leaves.sort(key=lambda x: (ring_distance(x, node), clockwise_distance(node, x)))
        return leaves

    def _zone_finger(self, zone: int) -> Optional[NodeId]:
        members = self._zone_members.get(zone)
        if not members:
            return None
        # zone base has suffix 0, so the closest member is the smallest suffix
        return make_node_id(zone, members[0], self.cfg.zone)

    def _level1(self, zone: int) -> list[Optional[NodeId]]:
        m = self.cfg.zone.zone_bits
        out: list[Optional[NodeId]] = []
        for i in range(1, m + 1):
            target_zone = (zone + (1 << (i - 1))) % self.cfg.zone.zone_count
            out.append(self._zone_finger(target_zone))
        return out

    def _digit_range(self, key_suffix: int, depth: int, digit: int) -> tuple[int, int]:
        """Suffix interval of nodes sharing ``depth`` digits with key_suffix
        and having ``digit`` at position ``depth``."""
        cfg = self.cfg
        d, b, n = cfg.digit_count, cfg.fanout_bits, cfg.zone.suffix_bits
        pad = d * b - n
        padded = key_suffix << pad
        keep = b * (d - depth)
        prefix = (padded >> keep) << keep if depth else 0
        lo_pad = prefix | (digit << (b * (d - depth - 1)))
        hi_pad = lo_pad + (1 << (b * (d - depth - 1)))
        lo = (lo_pad + (1 << pad) - 1) >> pad
        hi = (hi_pad + (1 << pad) - 1) >> pad
        return lo, hi

    def _row_entry(self, zone: int, key_suffix: int, depth: int, digit: int,
                   exclude: int) -> Optional[NodeId]:
        members = self._zone_members.get(zone)
        if not members:
            return None
        lo, hi = self._digit_range(key_suffix, depth, digit)
        i = bisect.bisect_left(members, lo)
        while i < len(members) and members[i] < hi:
            if members[i] != exclude:
                return make_node_id(zone, members[i], self.cfg.zone)
            i += 1
        return None

    def _group_size(self, zone: int, suffix: int, depth: int) -> int:
        """Number of zone members sharing the first ``depth`` digits with suffix."""
        members = self._zone_members.get(zone, [])
        if depth == 0:
            return len(members)
        cfg = self.cfg
        d, b, n = cfg.digit_count, cfg.fanout_bits, cfg.zone.suffix_bits
        pad = d * b - n
        padded = suffix << pad
        keep = b * (d - depth)
        lo_pad = (padded >> keep) << keep
        hi_pad = lo_pad + (1 << keep)
        lo = (lo_pad + (1 << pad) - 1) >> pad
        hi = (hi_pad + (1 << pad) - 1) >> pad
        return bisect.bisect_left(members, hi) - bisect.bisect_left(members, lo)

    def _level2(self, zone: int, suffix: int) -> list[dict[int, NodeId]]:
        rows: list[dict[int, NodeId]] = []
        for depth in range(self.cfg.digit_count):
            if self._group_size(zone, suffix, depth) <= 1:
                break
            own = suffix_digit(suffix, depth, self.cfg)
            row: dict[int, NodeId] = {}
            for digit in range(self.cfg.digit_base):
                if digit == own:
                    continue
                entry = self._row_entry(zone, suffix, depth, digit, suffix)
                if entry is not None:
                    row[digit] = entry
            rows.append(row)
        return rows

    def neighborhood_set(self, node: NodeId) -> list[NodeId]:
        """Proximity-nearest peers by the RTT oracle (ties by id)."""
        if node not in self._live:
            raise MembershipError(f"node {to_hex(node)} is not a member")
        k = self.cfg.neighborhood_size
        others = [x for x in self._ring if x != node]
        others.sort(key=lambda x: (self.proximity(node, x), x))
        return others[:k]

    def build_routing_state(self, node: NodeId, include_neighborhood: bool = False) -> RoutingState:
        if node not in self._live:
            raise MembershipError(f"node {to_hex(node)} is not a member")
        cached = self._states.get(node)
        if cached is None:
            zone, suffix = split_node_id(node, self.cfg.zone)
            cached = RoutingState(
                node=node,
                zone=zone,
                suffix=suffix,
                leaf_set=self._leaf_set(node),
                level1=self._level1(zone),
                level2=self._level2(zone, suffix),
            )
            self._states[node] = cached
        if include_neighborhood and not cached.neighborhood:
            cached.neighborhood = self.neighborhood_set(node)
        return cached

    # -- routing --------------------------------------------------------------

    def minimizer(self, key: int) -> NodeId:
        """Live node ring-closest to the key (global view)."""
        if not self._ring:
            raise MembershipError("overlay is empty")
        idx = bisect.bisect_left(self._ring, key)
        cands = {self._ring[idx % len(self._ring)], self._ring[(idx - 1) % len(self._ring)]}
        return ring_minimizer(key, cands)

    def _leaf_span_covers(self, st: RoutingState, key: int) -> bool:
        if not st.leaf_set:
            return True
        if len(self._ring) - 1 <= self.cfg.leaf_size:
            return True
        # half the leaf set are successors: the smallest clockwise distances
        ordered = sorted(st.leaf_set, key=lambda x: clockwise_distance(st.node, x))
        half = self.cfg.leaf_size // 2
        cw_ext = ordered[half - 1]
        ccw_ext = ordered[half]
        return clockwise_distance(ccw_ext, key) <= clockwise_distance(ccw_ext, cw_ext)

    def _next_hop(self, cur: NodeId, key: int) -> tuple[str, Optional[NodeId]]:
        """Local forwarding decision: ("deliver", None) or ("hop", next)."""
        st = self.build_routing_state(cur)
        n_bits = self.cfg.zone.suffix_bits
        key_zone = key >> n_bits

        if self._leaf_span_covers(st, key):
            best = ring_minimizer(key, st.leaf_set + [cur])
            if best == cur:
                return "deliver", None
            return "hop", best

        if key_zone == st.zone:
            # within-zone: digit hop, else a strictly closer node that keeps
            # at least the current digit-prefix match (termination invariant)
            key_suffix = key & ((1 << n_bits) - 1)
            depth = common_digit_prefix(st.suffix, key_suffix, self.cfg)
            if depth < len(st.level2):
                entry = st.level2[depth].get(suffix_digit(key_suffix, depth, self.cfg))
                if entry is not None:
                    return "hop", entry
            best = cur
            pool = list(st.leaf_set)
            for row in st.level2:
                pool.extend(row.values())
            for c in pool:
                if c >> n_bits != key_zone:
                    continue
                if common_digit_prefix(c & ((1 << n_bits) - 1), key_suffix, self.cfg) < depth:
                    continue
                if _closer(key, c, best):
                    best = c
            if best != cur:
                return "hop", best
            return "deliver", None

        # cross-zone: clockwise numeric descent toward the key, never past it
        span = clockwise_distance(cur, key)
        pool = [e for e in st.level1 if e is not None]
        pool.extend(st.leaf_set)
        for row in st.level2:
            pool.extend(row.values())
        best_jump = 0
        best_node: Optional[NodeId] = None
        for c in pool:
            jump = clockwise_distance(cur, c)
            if 0 < jump <= span and jump > best_jump:
                best_jump, best_node = jump, c
        if best_node is not None:
            return "hop", best_node
        return "deliver", None

    def route(self, source: NodeId, key: int) -> RoutePath:
        """Route a key from source to the live ring-distance minimizer."""
        if source not in self._live:
            raise MembershipError(f"source {to_hex(source)} is not a member")
        if not 0 <= key < ID_SPACE:
            raise RangeError(f"key {key} outside the 128-bit space")
        origin_zone = self.zone_of(source)
        hops = [source]
        visited = {source}
        cur = source
        limit = 2 * (self.cfg.digit_count + self.cfg.zone.zone_bits) + 64
        for _ in range(limit):
            verdict, nxt = self._next_hop(cur, key)
            if verdict == "deliver":
                return RoutePath(hops, delivered=True)
            assert nxt is not None
            nxt_zone = self.zone_of(nxt)
            if nxt_zone != origin_zone:
                if not self.zone_policy(origin_zone).allow_egress:
                    return RoutePath(hops, delivered=False, blocked=True, blocked_at=cur,
                                     reason="egress blocked by origin zone policy")
                if not self.zone_policy(nxt_zone).allow_ingress:
                    return RoutePath(hops, delivered=False, blocked=True, blocked_at=cur,
                                     reason="ingress blocked by target zone policy")
            if nxt in visited:
                raise InvariantViolation(
                    f"routing loop at {to_hex(nxt)} for key {to_hex(key)}")
            visited.add(nxt)
            hops.append(nxt)
            cur = nxt
        raise InvariantViolation(f"hop limit exceeded routing key {to_hex(key)}")

    # -- dumps ----------------------------------------------------------------

    def dump(self, include_neighborhood: bool = False) -> str:
        """Text snapshot, one line per node (tab separated)."""
        cfg = self.cfg
        lines = [
            f"# zone_bits={cfg.zone.zone_bits} fanout_bits={cfg.fanout_bits} "
            f"leaf_size={cfg.leaf_size}"
        ]
        for node in self._ring:
            st = self.build_routing_state(node, include_neighborhood)
            leaf = ",".join(to_hex(x) for x in st.leaf_set) or "-"
            l1 = ",".join(
                f"{i + 1}={to_hex(e)}" for i, e in enumerate(st.level1) if e is not None
            ) or "-"
            l2 = ",".join(
                f"{r}.{d}={to_hex(e)}"
                for r, row in enumerate(st.level2)
                for d, e in sorted(row.items())
            ) or "-"
            lines.append(f"{to_hex(node)}\t{st.zone}\t{leaf}\t{l1}\t{l2}")
        return "\n".join(lines) + "\n"


def verify_overlay_dump(text: str) -> list[str]:
    """Check a dump against the population it declares; returns violations."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        return ["missing header line"]
    header = dict(
        kv.split("=") for kv in lines[0].lstrip("# ").split() if "=" in kv
    )
    try:
        zcfg = ZoneConfig(zone_bits=int(header["zone_bits"]))
        cfg = OverlayConfig(
            zone=zcfg,
            fanout_bits=int(header["fanout_bits"]),
            leaf_size=int(header["leaf_size"]),
        )
    except (KeyError, ValueError) as e:
        return [f"bad header: {e}"]

    rows: list[tuple[NodeId, int, list[NodeId], dict[int, NodeId], dict[tuple[int, int], NodeId]]] = []
    for ln in lines[1:]:
        parts = ln.split("\t")
        if len(parts) < 5:
            return [f"malformed line: {ln!r}"]
        try:
            node = from_hex(parts[0])
            zone = int(parts[1])
            leaf = [] if parts[2] == "-" else [from_hex(x) for x in parts[2].split(",")]
            l1 = {}
            if parts[3] != "-":
                for kv in parts[3].split(","):
                    k, v = kv.split("=")
                    l1[int(k)] = from_hex(v)
            l2 = {}
            if parts[4] != "-":
                for kv in parts[4].split(","):
                    k, v = kv.split("=")
                    r, d = k.split(".")
                    l2[(int(r), int(d))] = from_hex(v)
        except (RangeError, ValueError) as e:
            return [f"malformed line: {ln!r} ({e})"]
        rows.append((node, zone, leaf, l1, l2))

    shadow = Overlay(cfg)
    shadow.bootstrap(n for n, *_ in rows)
    violations: list[str] = []
    for node, zone, leaf, l1, l2 in rows:
        hexid = to_hex(node)
        if zone != node >> zcfg.suffix_bits:
            violations.append(f"{hexid}: zone {zone} != top {zcfg.zone_bits} bits")
            continue
        st = shadow.build_routing_state(node)
        if leaf != st.leaf_set:
            violations.append(f"{hexid}: leaf set mismatch")
        for i, entry in l1.items():
            if not 1 <= i <= zcfg.zone_bits:
                violations.append(f"{hexid}: level-1 index {i} out of range")
                continue
            want_zone = (zone + (1 << (i - 1))) % zcfg.zone_count
            if entry >> zcfg.suffix_bits != want_zone:
                violations.append(f"{hexid}: level-1 finger {i} not in zone {want_zone}")
            elif entry not in shadow:
                violations.append(f"{hexid}: level-1 finger {i} not in population")
        for i in range(1, zcfg.zone_bits + 1):
            want_zone = (zone + (1 << (i - 1))) % zcfg.zone_count
            if i not in l1 and any(
                (other >> zcfg.suffix_bits) == want_zone for other, *_ in rows
            ):
                violations.append(f"{hexid}: level-1 finger {i} missing but zone populated")
        suffix = node & ((1 << zcfg.suffix_bits) - 1)
        for (r, d), entry in l2.items():
            ez, es = split_node_id(entry, zcfg)
            if ez != zone:
                violations.append(f"{hexid}: row {r} entry crosses zones")
                continue
            if common_digit_prefix(es, suffix, cfg) < r or suffix_digit(es, r, cfg) != d:
                violations.append(f"{hexid}: row {r} digit {d} entry has wrong prefix")
        for r, row in enumerate(st.level2):
            for d, entry in row.items():
                if (r, d) not in l2:
                    violations.append(
                        f"{hexid}: row {r} digit {d} missing but population has a match")
    return violations


# ---------------------------------------------------------------------------
# Logical-node multiplexing


def multiplex_logical_nodes(
    hosts: Sequence[tuple[str, float]],
    unit: float,
    zone_for_host: Optional[Callable[[str], int]] = None,
    cfg: ZoneConfig = ZoneConfig(),
    salt: bytes = b"",
) -> dict[str, list[NodeId]]:
    """Map physical hosts to ceil(capacity/unit) logical node ids (min one).

    Logical peers of one host share its zone when ``zone_for_host`` is given;
    the network layer later shares the host's bandwidth among them.
    """
    if unit <= 0:
        raise RangeError("unit must be positive")
    out: dict[str, list[NodeId]] = {}
    for host, capacity in hosts:
        if capacity < 0:
            raise RangeError(f"host {host!r} has negative capacity")
        count = max(1, math.ceil(capacity / unit))
        ids = []
        for k in range(count):
            digest = hashlib.sha1(salt + f"{host}#{k}".encode("utf-8")).digest()
            raw = int.from_bytes(digest[:16], "big")
            if zone_for_host is None:
                ids.append(raw)
            else:
                zone = zone_for_host(host)
                ids.append(make_node_id(zone, raw & ((1 << cfg.suffix_bits) - 1), cfg))
        out[host] = ids
    return out
