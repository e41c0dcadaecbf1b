"""Attacker nodes: floods, scheduled prime attacks, pairing MITM, SPIT.

The flooder sends request packets (which provoke replies) at a fixed rate,
optionally with uniformly spoofed source addresses, which is why
per-source filtering at the victim goes nowhere. The scheduled attacker
hits the victim's prime address for a few hours daily; at schedule
granularity that means the victim's policy blocks the prime for the drawn
window, and at packet level it really floods.
"""

import random
from dataclasses import dataclass, field
from enum import Enum

from .addressing import Ipv6Address
from .caller import CallerNode
from .engine import Node, Packet, SimTime, Simulator
from .messages import Ping
from .mobile_host import MobileHost, WindowBlock, WindowUnblock
from .sas import (
    CommitMessage,
    DirectChannel,
    PairResult,
    RevealMessage,
    SasAbort,
    ShareMessage,
    commitment,
    run_pairing,
)


@dataclass(frozen=True, slots=True)
class FloodConfig:
    target: Ipv6Address
    rate_pps: float
    start: SimTime
    stop: SimTime
    payload_size: int = 56
    spoof_sources: bool = False

    def __post_init__(self):
        if self.rate_pps <= 0:
            raise ValueError("flood rate must be positive")
        if self.stop < self.start:
            raise ValueError("flood stops before it starts")


@dataclass(frozen=True, slots=True)
class SleepDeprivationConfig:
    """Minimal-rate variant: one packet per sleep timeout keeps the radio up."""

    victim_sleep_timeout_s: float

    @property
    def rate_pps(self) -> float:
        return 1.0 / self.victim_sleep_timeout_s


@dataclass(slots=True)
class FloodStats:
    sent: int = 0
    replies_received: int = 0


@dataclass(frozen=True, slots=True)
class _Emit:
    stop_us: int
    target: Ipv6Address
    rate_pps: float
    payload_size: int
    spoof: bool


class Flooder(Node):
    """Emits pings at a fixed rate inside one or more windows."""

    def __init__(self, sim: Simulator, node_id: str, address: Ipv6Address):
        super().__init__(sim, node_id)
        self.address = address
        self.stats = FloodStats()
        sim.register_route(address, node_id)

    def run_flood(self, config: FloodConfig) -> FloodStats:
        self.flood_between(config.start, config.stop, config.target,
                           config.rate_pps, config.payload_size,
                           config.spoof_sources)
        return self.stats

    def flood_between(self, start: SimTime, stop: SimTime, target: Ipv6Address,
                      rate_pps: float, payload_size: int = 56,
                      spoof: bool = False) -> None:
        self.sim.call_at(start, self.node_id,
                         _Emit(stop_us=stop.micros, target=target,
                               rate_pps=rate_pps, payload_size=payload_size,
                               spoof=spoof))

    def on_timer(self, token: object) -> None:
        if not isinstance(token, _Emit):
            return
        if self.sim.now.micros >= token.stop_us:
            return
        if token.spoof:
            src = Ipv6Address(self.sim.rng.getrandbits(64),
                              self.sim.rng.getrandbits(64))
        else:
            src = self.address
        self.sim.send(Packet(src=src, dst=token.target,
                             payload=Ping(self.stats.sent),
                             size_bytes=token.payload_size))
        self.stats.sent += 1
        self.sim.call_in(1.0 / token.rate_pps, self.node_id, token)

    def on_packet(self, packet: Packet) -> None:
        # attacker ignores reply content; silence tells it nothing either
        self.stats.replies_received += 1


@dataclass(frozen=True, slots=True)
class AttackSchedule:
    """Daily attack window: fixed duration, start drawn from a small set."""

    daily_hours: int
    start_choices: tuple[int, ...]

    def __post_init__(self):
        if self.daily_hours not in (4, 6):
            raise ValueError("attack duration must be 4 or 6 hours")
        if not self.start_choices:
            raise ValueError("no start choices")
        for start in self.start_choices:
            if not (0 <= start and start + self.daily_hours <= 24):
                raise ValueError(f"window starting {start} leaves the day")

    def draw_start(self, rng: random.Random) -> int:
        return rng.choice(self.start_choices)

    def covers(self, start_hour: int, hour: float) -> bool:
        return start_hour <= hour < start_hour + self.daily_hours

    def paper_rejection_probability(self) -> float:
        """Coincidence arithmetic treating both factors as window fractions."""
        return (self.daily_hours / 12.0) ** 2


FOUR_HOUR_SCHEDULE = AttackSchedule(daily_hours=4, start_choices=(8, 12, 16))
SIX_HOUR_SCHEDULE = AttackSchedule(daily_hours=6, start_choices=(8, 14))


@dataclass(frozen=True, slots=True)
class WindowLog:
    day: int
    start_hour: int


def run_scheduled_prime_attack(sim: Simulator, victim: MobileHost,
                               schedule: AttackSchedule, horizon_days: int,
                               flooder: Flooder | None = None,
                               flood_rate_pps: float = 100.0) -> list[WindowLog]:
    """Arrange the daily windows against the victim's prime address.

    With a flooder the attack is packet-level and the victim's own
    detection does the blocking; otherwise the victim's policy blocks the
    prime for exactly the drawn window.
    """
    windows = []
    for day in range(horizon_days):
        start = schedule.draw_start(sim.rng)
        windows.append(WindowLog(day=day, start_hour=start))
        opens = SimTime.at(day, start)
        closes = SimTime.at(day, start + schedule.daily_hours)
        if flooder is not None:
            flooder.flood_between(opens, closes, victim.prime, flood_rate_pps)
        else:
            sim.call_at(opens, victim.node_id, WindowBlock())
            sim.call_at(closes, victim.node_id, WindowUnblock())
    return windows


class PerSourceFilter:
    """Victim-side source blocking, the defense spoofing defeats."""

    def __init__(self, strikes: int = 1):
        self.strikes = strikes
        self.blocked: set[Ipv6Address] = set()
        self.filtered = 0
        self.passed = 0
        self._counts: dict[Ipv6Address, int] = {}

    def admit(self, src: Ipv6Address) -> bool:
        if src in self.blocked:
            self.filtered += 1
            return False
        count = self._counts.get(src, 0) + 1
        self._counts[src] = count
        if count >= self.strikes:
            self.blocked.add(src)
        self.passed += 1
        return True


class MitmStrategy(Enum):
    PASSIVE = "passive"
    RANDOM_SUBSTITUTION = "random_substitution"
    REVEAL_SUBSTITUTION = "reveal_substitution"


@dataclass(frozen=True, slots=True)
class MitmResult:
    undetected: bool
    substituted: bool
    abort_reason: SasAbort | None


class MitmChannel(DirectChannel):
    """In-path attacker for the pairing run.

    RANDOM_SUBSTITUTION plays a full double session with its own nonces and
    key material on both legs; it stays consistent with its own commitment,
    so only the out-of-band SAS comparison can catch it.
    REVEAL_SUBSTITUTION forwards the honest commitment but swaps the
    reveal, which the commitment check kills outright.
    """

    def __init__(self, rng: random.Random, strategy: MitmStrategy,
                 nonce_bytes: int = 16):
        self.strategy = strategy
        self.nonce_to_responder = rng.randbytes(nonce_bytes)
        self.nonce_to_initiator = rng.randbytes(nonce_bytes)
        self.key_to_responder = rng.randbytes(32)
        self.key_to_initiator = rng.randbytes(32)
        self.swapped_reveal = rng.randbytes(nonce_bytes)

    def forward_commit(self, msg: CommitMessage) -> CommitMessage:
        if self.strategy is MitmStrategy.RANDOM_SUBSTITUTION:
            return CommitMessage(commitment=commitment(self.nonce_to_responder),
                                 public_key=self.key_to_responder)
        return msg

    def forward_share(self, msg: ShareMessage) -> ShareMessage:
        if self.strategy is MitmStrategy.RANDOM_SUBSTITUTION:
            return ShareMessage(nonce=self.nonce_to_initiator,
                                public_key=self.key_to_initiator)
        return msg

    def forward_reveal(self, msg: RevealMessage) -> RevealMessage:
        if self.strategy is MitmStrategy.RANDOM_SUBSTITUTION:
            return RevealMessage(nonce=self.nonce_to_responder)
        if self.strategy is MitmStrategy.REVEAL_SUBSTITUTION:
            return RevealMessage(nonce=self.swapped_reveal)
        return msg


def mitm_attempt(rng: random.Random, sas_bits: int = 8,
                 strategy: MitmStrategy = MitmStrategy.RANDOM_SUBSTITUTION,
                 nonce_bytes: int = 16) -> MitmResult:
    """One randomized pairing run with the attacker in the middle."""
    initiator_key = rng.randbytes(32)
    responder_key = rng.randbytes(32)
    channel = MitmChannel(rng, strategy, nonce_bytes)
    outcome = run_pairing(rng, initiator_key, responder_key,
                          sas_bits=sas_bits, nonce_bytes=nonce_bytes,
                          channel=channel)
    return MitmResult(undetected=outcome.confirmed,
                      substituted=strategy is not MitmStrategy.PASSIVE,
                      abort_reason=outcome.abort_reason)


class SpitCaller(CallerNode):
    """Nuisance caller that legitimately obtained a disposable address.

    The protocol run is honest; the abuse is what the calls are for. After
    the victim blocks the granted address, calls black-hole, and renewed
    address requests meet the deny list.
    """

    def spit_call(self, victim_fqdn: str, on_result) -> None:
        self.place_call(victim_fqdn, on_result)

    def re_request_address(self, victim_fqdn: str, on_done) -> None:
        entry = self.entry_for(victim_fqdn)
        entry.peer_address = None
        entry.peer_known_blocked = False
        self.request_address(victim_fqdn, on_done)
