"""Topology construction: node populations, RTT oracles, host multiplexing.

Four generators share one output shape, `BuiltTopology`: the node id list,
the overlay configuration, a proximity callable, and optional host
assignments.  Geographic topologies place nodes on a plane and derive RTT
from euclidean distance; imported topologies read (id, lat, lon) rows and
bin nodes into zones by nearest landmark.
"""

from __future__ import annotations

import bisect
import csv
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from ..errors import ConfigError
from ..idspace import NodeId, ZoneConfig, make_node_id
from ..overlay import OverlayConfig, default_proximity
from .scenario import HostsSpec, OverlaySpec, TopologySpec

# RTT model for planar layouts: base switching cost plus distance at ~100 km/ms
GEO_BASE_MS = 1.0
GEO_MS_PER_KM = 0.01


@dataclass
class BuiltTopology:
    nodes: list[NodeId]
    cfg: OverlayConfig
    proximity: Callable[[NodeId, NodeId], float]
    host_of: Optional[Callable[[NodeId], object]] = None
    host_bandwidth: dict[object, float] = field(default_factory=dict)
    positions: dict[NodeId, tuple[float, float]] = field(default_factory=dict)


def _overlay_cfg(spec: TopologySpec, ospec: OverlaySpec) -> OverlayConfig:
    return OverlayConfig(
        zone=ZoneConfig(zone_bits=spec.zone_bits),
        fanout_bits=ospec.fanout_bits,
        leaf_size=ospec.leaf_size,
        neighborhood_size=ospec.neighborhood,
    )


def _draw_ids(rng: random.Random, count: int, prefix: int, cfg: ZoneConfig) -> list[NodeId]:
    """Distinct uniform ids within one zone prefix."""
    span = 1 << cfg.suffix_bits
    if count > span:
        raise ConfigError(f"zone {prefix} cannot hold {count} nodes")
    seen: set[int] = set()
    out: list[NodeId] = []
    while len(out) < count:
        suffix = rng.randrange(span)
        if suffix in seen:
            continue
        seen.add(suffix)
        out.append(make_node_id(prefix, suffix, cfg))
    return out


def _planar_proximity(
    positions: dict[NodeId, tuple[float, float]]
) -> Callable[[NodeId, NodeId], float]:
    # nodes joined after the build have no coordinates; park them far away
    far = (1e6, 1e6)

    def rtt(a: NodeId, b: NodeId) -> float:
        if a == b:
            return 0.0
        ax, ay = positions.get(a, far)
        bx, by = positions.get(b, far)
        return GEO_BASE_MS + GEO_MS_PER_KM * math.dist((ax, ay), (bx, by))

    return rtt


def build_topology(
    spec: TopologySpec,
    ospec: OverlaySpec,
    hosts: HostsSpec,
    rng: random.Random,
) -> BuiltTopology:
    cfg = _overlay_cfg(spec, ospec)
    if spec.kind == "single":
        nodes = _draw_ids(rng, spec.n, 0, cfg.zone)
        built = BuiltTopology(
            nodes=nodes,
            cfg=cfg,
            proximity=default_proximity(cfg.zone, spec.diameter_ms, spec.inter_zone_ms),
        )
        if hosts.enabled:
            _assign_hosts(built, hosts, rng)
        return built
    if spec.kind == "groups":
        nodes = []
        for prefix, count in enumerate(spec.groups or []):
            nodes.extend(_draw_ids(rng, count, prefix, cfg.zone))
        return BuiltTopology(
            nodes=nodes,
            cfg=cfg,
            proximity=default_proximity(cfg.zone, spec.diameter_ms, spec.inter_zone_ms),
        )
    if spec.kind == "geo":
        return _build_geo(spec, cfg, rng)
    if spec.kind == "import":
        return _build_import(spec, cfg)
    raise ConfigError(f"unknown topology kind {spec.kind!r}")


def _build_geo(spec: TopologySpec, cfg: OverlayConfig, rng: random.Random) -> BuiltTopology:
    """Zone centers on a grid, nodes scattered around their center.

    The scatter radius makes the worst intra-zone pair hit diameter_ms
    exactly; the grid spacing puts adjacent centers inter_zone_ms apart.
    """
    side = math.ceil(math.sqrt(spec.geo_zones))
    scatter_km = (spec.diameter_ms - GEO_BASE_MS) / GEO_MS_PER_KM / 2.0
    spacing_km = (spec.inter_zone_ms - GEO_BASE_MS) / GEO_MS_PER_KM
    positions: dict[NodeId, tuple[float, float]] = {}
    nodes: list[NodeId] = []
    for zone in range(spec.geo_zones):
        cx = (zone % side) * spacing_km
        cy = (zone // side) * spacing_km
        for node in _draw_ids(rng, spec.geo_nodes_per_zone, zone, cfg.zone):
            angle = rng.uniform(0, 2 * math.pi)
            radius = scatter_km * math.sqrt(rng.random())
            positions[node] = (cx + radius * math.cos(angle), cy + radius * math.sin(angle))
            nodes.append(node)
    return BuiltTopology(
        nodes=nodes, cfg=cfg, proximity=_planar_proximity(positions), positions=positions
    )


def _build_import(spec: TopologySpec, cfg: OverlayConfig) -> BuiltTopology:
    """Read (id, lat, lon) rows; bin into zones by k-means-free landmark grid.

    Longitude/latitude are projected with a flat equirectangular
    approximation, adequate for RTT modeling at the scales involved.
    """
    path = Path(spec.csv_path or "")
    if not path.exists():
        raise ConfigError(f"topology csv not found: {path}")
    rows: list[tuple[int, float, float]] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        for raw in reader:
            if not raw or raw[0].strip().lower() in ("id", ""):
                continue
            if len(raw) < 3:
                raise ConfigError(f"topology csv row needs id, lat, lon: {raw!r}")
            rows.append((int(raw[0]), float(raw[1]), float(raw[2])))
    if not rows:
        raise ConfigError(f"topology csv is empty: {path}")
    km_per_deg = 111.0
    lat0 = sum(r[1] for r in rows) / len(rows)
    scale_x = km_per_deg * math.cos(math.radians(lat0))
    projected = [(rid, lon * scale_x, lat * km_per_deg) for rid, lat, lon in rows]

    zone_count = 1 << spec.zone_bits
    # landmark binning: equal-population cuts along x, then y within each cut
    cuts_x = max(1, int(math.sqrt(zone_count)))
    cuts_y = max(1, zone_count // cuts_x)
    xs = sorted(p[1] for p in projected)
    ys = sorted(p[2] for p in projected)

    def bin_node(x: float, y: float) -> int:
        return _quantile_bin(xs, x, cuts_x) * cuts_y + _quantile_bin(ys, y, cuts_y)

    positions: dict[NodeId, tuple[float, float]] = {}
    nodes: list[NodeId] = []
    suffix_mask = (1 << cfg.zone.suffix_bits) - 1
    seen: set[int] = set()
    for rid, x, y in projected:
        zone = bin_node(x, y) % zone_count
        suffix = rid & suffix_mask
        node = make_node_id(zone, suffix, cfg.zone)
        while node in seen:  # collide on suffix: perturb deterministically
            suffix = (suffix + 0x9E3779B9) & suffix_mask
            node = make_node_id(zone, suffix, cfg.zone)
        seen.add(node)
        positions[node] = (x, y)
        nodes.append(node)
    return BuiltTopology(
        nodes=nodes, cfg=cfg, proximity=_planar_proximity(positions), positions=positions
    )


def _quantile_bin(sorted_vals: list[float], v: float, bins: int) -> int:
    if bins <= 1:
        return 0
    rank = bisect.bisect_left(sorted_vals, v)
    return min(bins - 1, rank * bins // max(1, len(sorted_vals)))


def _assign_hosts(built: BuiltTopology, hosts: HostsSpec, rng: random.Random) -> None:
    """Pack logical nodes onto hosts; capacity is measured in units."""
    slots: list[tuple[str, float]] = []
    for ci, klass in enumerate(hosts.classes):
        per_host = max(1, klass.capacity_units // hosts.unit_capacity)
        for hi in range(klass.count):
            label = f"h{ci}-{hi}"
            slots.extend((label, klass.bandwidth_mbps) for _ in range(per_host))
    if len(slots) < len(built.nodes):
        raise ConfigError(
            f"hosts provide {len(slots)} slots for {len(built.nodes)} nodes"
        )
    rng.shuffle(slots)
    assignment = {node: slots[i][0] for i, node in enumerate(built.nodes)}
    built.host_of = assignment.__getitem__
    built.host_bandwidth = {label: bw for label, bw in slots}
