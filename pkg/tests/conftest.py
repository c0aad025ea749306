"""Shared fixtures: small single-zone overlays with deterministic membership."""

import random

from ringforest.idspace import ZoneConfig
from ringforest.overlay import Overlay, OverlayConfig


def build_ring(n, seed=1, zone_bits=0, fanout_bits=4, leaf_size=24):
    cfg = OverlayConfig(
        zone=ZoneConfig(zone_bits=zone_bits),
        fanout_bits=fanout_bits,
        leaf_size=leaf_size,
    )
    rng = random.Random(seed)
    nodes = set()
    while len(nodes) < n:
        nodes.add(rng.getrandbits(128 - zone_bits))
    if zone_bits:
        nodes = {rng.randrange(1 << zone_bits) << (128 - zone_bits) | s for s in nodes}
    overlay = Overlay(cfg)
    overlay.bootstrap(sorted(nodes))
    return overlay
