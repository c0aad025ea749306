"""128-bit circular identifier space split into a zone prefix and a suffix.

A node id is the integer D = P * 2**n + S where P is the zone prefix
(top ``m`` bits) and S the within-zone suffix (remaining ``n`` bits,
m + n = 128).  Application ids live in the same space.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .errors import RangeError

ID_BITS = 128
ID_SPACE = 1 << ID_BITS
HEX_WIDTH = ID_BITS // 4

NodeId = int
AppId = int


@dataclass(frozen=True)
class ZoneConfig:
    """Split of the 128-bit id into zone prefix bits and suffix bits."""

    zone_bits: int = 8

    def __post_init__(self) -> None:
        if not 0 <= self.zone_bits <= ID_BITS:
            raise RangeError(f"zone_bits must be in [0, {ID_BITS}], got {self.zone_bits}")

    @property
    def suffix_bits(self) -> int:
        return ID_BITS - self.zone_bits

    @property
    def zone_count(self) -> int:
        return 1 << self.zone_bits


def make_node_id(prefix: int, suffix: int, cfg: ZoneConfig = ZoneConfig()) -> NodeId:
    """Compose prefix and suffix into a node id (D = P * 2**n + S)."""
    if not 0 <= prefix < cfg.zone_count:
        raise RangeError(f"zone prefix {prefix} out of range [0, {cfg.zone_count})")
    if not 0 <= suffix < (1 << cfg.suffix_bits):
        raise RangeError(f"suffix {suffix} out of range for {cfg.suffix_bits} bits")
    return (prefix << cfg.suffix_bits) | suffix


def split_node_id(node: NodeId, cfg: ZoneConfig = ZoneConfig()) -> tuple[int, int]:
    """Inverse of make_node_id: recover (prefix, suffix)."""
    if not 0 <= node < ID_SPACE:
        raise RangeError(f"id {node} outside the {ID_BITS}-bit space")
    return node >> cfg.suffix_bits, node & ((1 << cfg.suffix_bits) - 1)


def zone_of(node: NodeId, cfg: ZoneConfig = ZoneConfig()) -> int:
    return split_node_id(node, cfg)[0]


def app_id(name: str, creator_key: bytes = b"", salt: bytes = b"") -> AppId:
    """Application id: SHA-1 over name, creator key and salt, top 128 bits kept."""
    digest = hashlib.sha1(name.encode("utf-8") + creator_key + salt).digest()
    return int.from_bytes(digest[:16], "big")


def ring_distance(a: int, b: int) -> int:
    """Shorter arc between two ids on the 2**128 circle."""
    if not (0 <= a < ID_SPACE and 0 <= b < ID_SPACE):
        raise RangeError("ids must lie inside the 128-bit space")
    d = (a - b) % ID_SPACE
    return min(d, ID_SPACE - d)


def clockwise_distance(a: int, b: int) -> int:
    """Arc length travelling clockwise (increasing ids) from a to b."""
    return (b - a) % ID_SPACE


def to_hex(node: int) -> str:
    """Canonical wire form: 32 lowercase hex characters, zero padded."""
    if not 0 <= node < ID_SPACE:
        raise RangeError(f"id {node} outside the {ID_BITS}-bit space")
    return format(node, "032x")


def from_hex(text: str) -> int:
    s = text.strip().lower()
    if len(s) != HEX_WIDTH or any(c not in "0123456789abcdef" for c in s):
        raise RangeError(f"expected {HEX_WIDTH} hex characters, got {text!r}")
    return int(s, 16)


def stable_hash(text: str, modulus: int) -> int:
    """Process-stable hash of a short label onto [0, modulus)."""
    if modulus <= 0:
        raise RangeError("modulus must be positive")
    digest = hashlib.sha1(text.encode("utf-8")).digest()
    return int.from_bytes(digest, "big") % modulus
