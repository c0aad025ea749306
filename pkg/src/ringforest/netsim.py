"""Deterministic virtual-time network simulation.

Time is an integer count of microseconds.  Events fire in (time, insertion
ordinal) order, so identical inputs replay identically.  Transfers share the
receiving host's bandwidth equally: a host with bandwidth B serving k
concurrent inbound flows gives each B/k (1 Mbps == 1 bit/us, so a 25 Mb
payload at 100 Mbps alone takes exactly 250 ms).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Hashable, Optional

from .errors import ConfigError, RangeError
from .idspace import NodeId

US_PER_MS = 1_000
US_PER_S = 1_000_000

_EPS_BITS = 1e-6


def reward_from_latency(latency_us: float, l_max_us: float) -> float:
    """r = 1 - latency / l_max, clipped into [0, 1]."""
    if l_max_us <= 0:
        raise RangeError("l_max must be positive")
    if latency_us < 0:
        raise RangeError("latency must be non-negative")
    return min(1.0, max(0.0, 1.0 - latency_us / l_max_us))


class LatencyRewardMap:
    """Latency-to-reward mapping with per-episode l_max calibration.

    l_max for an episode is the maximum latency observed during the previous
    episode, floor-bounded by the configured cap; the first episode uses the
    floor itself.  Clipped rewards are counted.
    """

    def __init__(self, floor_us: float):
        if floor_us <= 0:
            raise RangeError("l_max floor must be positive")
        self.floor_us = floor_us
        self.l_max_us = floor_us
        self.clip_count = 0
        self._episode_max = 0.0

    def reward(self, latency_us: float) -> float:
        self._episode_max = max(self._episode_max, latency_us)
        if latency_us > self.l_max_us:
            self.clip_count += 1
        return reward_from_latency(latency_us, self.l_max_us)

    def roll_episode(self) -> None:
        self.l_max_us = max(self._episode_max, self.floor_us)
        self._episode_max = 0.0


@dataclass
class Flow:
    fid: int
    src: NodeId
    dst: NodeId
    bits: float
    remaining: float
    on_delivered: Optional[Callable[[int, "Flow"], None]]
    tag: object = None


@dataclass
class _Bucket:
    """Per-host fair-share state over the active inbound flows."""

    flows: list[Flow] = field(default_factory=list)
    last_settle: int = 0
    version: int = 0


@dataclass(frozen=True)
class ChurnEvent:
    """One scheduled membership or bandwidth change."""

    time_us: int
    kind: str  # fail | leave | join | bandwidth
    node: NodeId
    value: Optional[float] = None  # new Mbps for kind == "bandwidth"

    def __post_init__(self) -> None:
        if self.kind not in ("fail", "leave", "join", "bandwidth"):
            raise ConfigError(f"unknown churn kind {self.kind!r}")
        if self.time_us < 0:
            raise ConfigError("churn time must be non-negative")
        if self.kind == "bandwidth" and (self.value is None or self.value <= 0):
            raise ConfigError("bandwidth churn needs a positive Mbps value")


class Network:
    """Event queue plus the shared-bandwidth transfer model."""

    def __init__(
        self,
        default_bandwidth_mbps: float = 100.0,
        propagation_us: Optional[Callable[[NodeId, NodeId], int]] = None,
        host_of: Optional[Callable[[NodeId], Hashable]] = None,
    ):
        if default_bandwidth_mbps <= 0:
            raise RangeError("bandwidth must be positive")
        self.now = 0
        self.default_bandwidth = default_bandwidth_mbps
        self.propagation_us = propagation_us or (lambda a, b: 0)
        self.host_of = host_of or (lambda n: n)
        self._heap: list[tuple[int, int, Callable[[], None]]] = []
        self._ordinal = 0
        self._bandwidth: dict[Hashable, float] = {}
        self._buckets: dict[Hashable, _Bucket] = {}
        self._next_fid = 0
        self.bits_sent: dict[NodeId, float] = {}
        self.bits_received: dict[NodeId, float] = {}
        self.flows_started = 0
        self.flows_completed = 0
        self.flows_cancelled = 0

    # -- event queue ------------------------------------------------------

    def at(self, time_us: int, fn: Callable[[], None]) -> None:
        if time_us < self.now:
            raise RangeError(f"cannot schedule in the past ({time_us} < {self.now})")
        heapq.heappush(self._heap, (int(time_us), self._ordinal, fn))
        self._ordinal += 1

    def after(self, delay_us: int, fn: Callable[[], None]) -> None:
        self.at(self.now + int(delay_us), fn)

    def step(self) -> bool:
        """Process one event; False when the queue is empty."""
        if not self._heap:
            return False
        t, _, fn = heapq.heappop(self._heap)
        self.now = t
        fn()
        return True

    def run(self, until_us: Optional[int] = None, max_events: int = 50_000_000) -> None:
        """Drain events; with ``until_us`` stop once the queue passes it."""
        for _ in range(max_events):
            if not self._heap:
                break
            if until_us is not None and self._heap[0][0] > until_us:
                break
            self.step()
        else:
            raise ConfigError("event budget exhausted; runaway schedule?")
        if until_us is not None and self.now < until_us:
            self.now = until_us

    @property
    def pending(self) -> int:
        return len(self._heap)

    # -- bandwidth --------------------------------------------------------

    def bandwidth_of(self, node: NodeId) -> float:
        return self._bandwidth.get(self.host_of(node), self.default_bandwidth)

    def set_bandwidth(self, node: NodeId, mbps: float) -> None:
        if mbps <= 0:
            raise RangeError("bandwidth must be positive")
        host = self.host_of(node)
        bucket = self._buckets.get(host)
        if bucket is not None:
            self._settle(host, bucket)
        self._bandwidth[host] = mbps
        if bucket is not None:
            self._reschedule(host, bucket)

    # -- transfers ---------------------------------------------------------

    def transmit(
        self,
        src: NodeId,
        dst: NodeId,
        bits: float,
        on_delivered: Optional[Callable[[int, Flow], None]] = None,
        tag: object = None,
    ) -> Flow:
        """Start a transfer; on_delivered(time_us, flow) fires at the receiver
        after the shared-bandwidth transfer plus one-way propagation."""
        if bits < 0:
            raise RangeError("payload bits must be non-negative")
        flow = Flow(self._next_fid, src, dst, float(bits), float(bits), on_delivered, tag)
        self._next_fid += 1
        self.flows_started += 1
        host = self.host_of(dst)
        bucket = self._buckets.setdefault(host, _Bucket(last_settle=self.now))
        self._settle(host, bucket)
        bucket.flows.append(flow)
        self._reschedule(host, bucket)
        return flow

    def _rate(self, host: Hashable, bucket: _Bucket) -> float:
        return self._bandwidth.get(host, self.default_bandwidth) / len(bucket.flows)

    def _settle(self, host: Hashable, bucket: _Bucket) -> None:
        elapsed = self.now - bucket.last_settle
        if elapsed > 0 and bucket.flows:
            rate = self._rate(host, bucket)
            for f in bucket.flows:
                f.remaining -= rate * elapsed
        bucket.last_settle = self.now
        done = [f for f in bucket.flows if f.remaining <= _EPS_BITS]
        if done:
            bucket.flows = [f for f in bucket.flows if f.remaining > _EPS_BITS]
            for f in done:
                self._complete(f)

    def _reschedule(self, host: Hashable, bucket: _Bucket) -> None:
        bucket.version += 1
        if not bucket.flows:
            return
        version = bucket.version
        rate = self._rate(host, bucket)
        soonest = min(f.remaining for f in bucket.flows)
        eta = self.now + max(1, math.ceil(soonest / rate))

        def fire() -> None:
            b = self._buckets.get(host)
            if b is None or b.version != version:
                return
            self._settle(host, b)
            self._reschedule(host, b)

        self.at(eta, fire)

    def _complete(self, flow: Flow) -> None:
        flow.remaining = 0.0
        self.bits_sent[flow.src] = self.bits_sent.get(flow.src, 0.0) + flow.bits
        self.bits_received[flow.dst] = self.bits_received.get(flow.dst, 0.0) + flow.bits
        self.flows_completed += 1
        if flow.on_delivered is not None:
            prop = int(self.propagation_us(flow.src, flow.dst))
            cb = flow.on_delivered
            self.at(self.now + prop, lambda: cb(self.now, flow))

    def cancel_flows(self, node: NodeId) -> int:
        """Drop all active flows to or from a node (it failed); returns count."""
        dropped = 0
        for host, bucket in list(self._buckets.items()):
            self._settle(host, bucket)
            keep = [f for f in bucket.flows if f.src != node and f.dst != node]
            dropped += len(bucket.flows) - len(keep)
            if len(keep) != len(bucket.flows):
                bucket.flows = keep
                self._reschedule(host, bucket)
        self.flows_cancelled += dropped
        return dropped

    # -- churn ---------------------------------------------------------------

    def inject(
        self,
        schedule: list[ChurnEvent],
        on_fail: Optional[Callable[[NodeId], None]] = None,
        on_leave: Optional[Callable[[NodeId], None]] = None,
        on_join: Optional[Callable[[NodeId], None]] = None,
        on_bandwidth: Optional[Callable[[NodeId, float], None]] = None,
    ) -> None:
        """Schedule churn events; fail/leave also cancel the victim's flows."""
        for ev in schedule:
            if ev.kind == "fail":
                def fire_fail(e: ChurnEvent = ev) -> None:
                    self.cancel_flows(e.node)
                    if on_fail is not None:
                        on_fail(e.node)
                self.at(ev.time_us, fire_fail)
            elif ev.kind == "leave":
                def fire_leave(e: ChurnEvent = ev) -> None:
                    self.cancel_flows(e.node)
                    if on_leave is not None:
                        on_leave(e.node)
                self.at(ev.time_us, fire_leave)
            elif ev.kind == "join":
                def fire_join(e: ChurnEvent = ev) -> None:
                    if on_join is not None:
                        on_join(e.node)
                self.at(ev.time_us, fire_join)
            else:
                def fire_bw(e: ChurnEvent = ev) -> None:
                    self.set_bandwidth(e.node, e.value)
                    if on_bandwidth is not None:
                        on_bandwidth(e.node, e.value)
                self.at(ev.time_us, fire_bw)
