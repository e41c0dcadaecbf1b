"""Deterministic discrete-event engine: virtual time, nodes, message delivery.

One seeded PRNG is owned by the engine and shared by every component, so a
(seed, scenario) pair fully determines a run. Time is fixed-point integer
microseconds to keep day/hour arithmetic exact over 1000-day horizons.
"""

import heapq
import itertools
import random
from dataclasses import dataclass, field

from .addressing import Ipv6Address

US_PER_SECOND = 1_000_000
US_PER_MINUTE = 60 * US_PER_SECOND
US_PER_HOUR = 60 * US_PER_MINUTE
US_PER_DAY = 24 * US_PER_HOUR


@dataclass(frozen=True, order=True, slots=True)
class SimTime:
    """Simulated instant, microseconds since epoch 0."""

    micros: int

    def __post_init__(self):
        if self.micros < 0:
            raise ValueError(f"negative SimTime: {self.micros}")

    @classmethod
    def from_seconds(cls, seconds: float) -> "SimTime":
        return cls(round(seconds * US_PER_SECOND))

    @classmethod
    def from_hours(cls, hours: float) -> "SimTime":
        return cls(round(hours * US_PER_HOUR))

    @classmethod
    def from_days(cls, days: float) -> "SimTime":
        return cls(round(days * US_PER_DAY))

    @classmethod
    def at(cls, day: int, hour: float = 0.0) -> "SimTime":
        return cls(day * US_PER_DAY + round(hour * US_PER_HOUR))

    @property
    def seconds(self) -> float:
        return self.micros / US_PER_SECOND

    @property
    def day(self) -> int:
        return self.micros // US_PER_DAY

    @property
    def hour_of_day(self) -> float:
        return (self.micros % US_PER_DAY) / US_PER_HOUR

    def hhmm(self) -> str:
        minutes = (self.micros % US_PER_DAY) // US_PER_MINUTE
        return f"{minutes // 60:02d}:{minutes % 60:02d}"

    def __add__(self, other: "SimTime") -> "SimTime":
        return SimTime(self.micros + other.micros)

    def __sub__(self, other: "SimTime") -> "SimTime":
        return SimTime(self.micros - other.micros)

    def plus_seconds(self, seconds: float) -> "SimTime":
        return SimTime(self.micros + round(seconds * US_PER_SECOND))


EPOCH = SimTime(0)


@dataclass(frozen=True, slots=True)
class LinkModel:
    """Uniform delivery latency and loss applied to every routed packet."""

    latency_s: float = 0.05
    loss_probability: float = 0.0

    def __post_init__(self):
        if self.latency_s < 0:
            raise ValueError("negative latency")
        if not 0.0 <= self.loss_probability <= 1.0:
            raise ValueError("loss probability outside [0,1]")


@dataclass(frozen=True, slots=True)
class Packet:
    """Routable unit: addresses plus an opaque payload dataclass."""

    src: Ipv6Address
    dst: Ipv6Address
    payload: object
    size_bytes: int = 56


@dataclass(frozen=True, slots=True)
class Timer:
    """Engine-internal wrapper marking a self-scheduled wakeup."""

    token: object


@dataclass(slots=True)
class Event:
    fire_at: SimTime
    seq: int
    target: str
    payload: object


@dataclass(slots=True)
class TrafficCounters:
    """Engine-level accounting. sent = delivered + lost + unroutable + in_flight."""

    sent: int = 0
    delivered: int = 0
    lost: int = 0
    unroutable: int = 0
    in_flight: int = 0

    def conserved(self) -> bool:
        return self.sent == self.delivered + self.lost + self.unroutable + self.in_flight


class PastEventError(Exception):
    """An event was scheduled before the current simulation time."""


class Node:
    """Base simulated node. Subclasses react to packets and timer wakeups."""

    def __init__(self, sim: "Simulator", node_id: str):
        self.sim = sim
        self.node_id = node_id
        sim.add_node(self)

    def on_packet(self, packet: Packet) -> None:
        raise NotImplementedError

    def on_timer(self, token: object) -> None:
        raise NotImplementedError


class Simulator:
    """Single-threaded event loop over a heap of (time, seq) ordered events."""

    def __init__(self, seed: int = 0, link: LinkModel | None = None,
                 keep_trace: bool = False):
        self.seed = seed
        self.rng = random.Random(seed)
        self.link = link if link is not None else LinkModel()
        self.now = EPOCH
        self.counters = TrafficCounters()
        self.trace: list[tuple[int, str, object]] | None = [] if keep_trace else None
        self.nodes: dict[str, Node] = {}
        self._queue: list[tuple[int, int, Event]] = []
        self._seq = itertools.count()
        self._exact_routes: dict[Ipv6Address, str] = {}
        self._prefix_routes: dict[int, str] = {}

    # -- nodes and routing ------------------------------------------------

    def add_node(self, node: Node) -> None:
        if node.node_id in self.nodes:
            raise ValueError(f"duplicate node id {node.node_id}")
        self.nodes[node.node_id] = node

    def register_route(self, address: Ipv6Address, node_id: str) -> None:
        self._exact_routes[address] = node_id

    def unregister_route(self, address: Ipv6Address) -> None:
        self._exact_routes.pop(address, None)

    def register_prefix_route(self, prefix: int, node_id: str) -> None:
        self._prefix_routes[prefix] = node_id

    def resolve(self, address: Ipv6Address) -> str | None:
        node_id = self._exact_routes.get(address)
        if node_id is None:
            node_id = self._prefix_routes.get(address.prefix)
        return node_id

    # -- scheduling --------------------------------------------------------

    def schedule_at(self, fire_at: SimTime, target: str, payload: object) -> None:
        if fire_at < self.now:
            raise PastEventError(f"event at {fire_at} scheduled at {self.now}")
        event = Event(fire_at=fire_at, seq=next(self._seq), target=target,
                      payload=payload)
        heapq.heappush(self._queue, (fire_at.micros, event.seq, event))

    def call_at(self, fire_at: SimTime, node_id: str, token: object) -> None:
        self.schedule_at(fire_at, node_id, Timer(token))

    def call_in(self, delay_s: float, node_id: str, token: object) -> None:
        self.call_at(self.now.plus_seconds(delay_s), node_id, token)

    def send(self, packet: Packet) -> bool:
        """Route a packet. Returns True if a delivery event was scheduled.

        Unroutable destinations are black-holed with a counter, the way the
        Internet swallows traffic to deconfigured addresses.
        """
        self.counters.sent += 1
        target = self.resolve(packet.dst)
        if target is None:
            self.counters.unroutable += 1
            return False
        if self.link.loss_probability > 0 and self.rng.random() < self.link.loss_probability:
            self.counters.lost += 1
            return False
        self.counters.in_flight += 1
        self.schedule_at(self.now.plus_seconds(self.link.latency_s), target, packet)
        return True

    # -- event loop ----------------------------------------------------------

    def run_until(self, t_end: SimTime) -> int:
        """Process every event with fire_at <= t_end; leaves now == t_end."""
        processed = 0
        while self._queue and self._queue[0][0] <= t_end.micros:
            _, _, event = heapq.heappop(self._queue)
            self.now = event.fire_at
            self._dispatch(event)
            processed += 1
        if t_end > self.now:
            self.now = t_end
        return processed

    def run(self) -> int:
        """Drain the queue entirely."""
        processed = 0
        while self._queue:
            _, _, event = heapq.heappop(self._queue)
            self.now = event.fire_at
            self._dispatch(event)
            processed += 1
        return processed

    def pending(self) -> int:
        return len(self._queue)

    def _dispatch(self, event: Event) -> None:
        node = self.nodes.get(event.target)
        if node is None:
            return
        if isinstance(event.payload, Timer):
            node.on_timer(event.payload.token)
            return
        self.counters.in_flight -= 1
        self.counters.delivered += 1
        if self.trace is not None:
            self.trace.append((event.fire_at.micros, event.target, event.payload))
        node.on_packet(event.payload)
