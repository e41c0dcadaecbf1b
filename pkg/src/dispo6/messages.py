"""Application-layer payload types shared by hosts, callers, and attackers."""

from dataclasses import dataclass

from .addressing import Ipv6Address


@dataclass(frozen=True, slots=True)
class Ping:
    """Request that provokes a reply (stand-in for echo/SYN/INVITE floods)."""

    seq: int = 0


@dataclass(frozen=True, slots=True)
class Pong:
    seq: int = 0


@dataclass(frozen=True, slots=True)
class CallRequest:
    caller_fqdn: str
    reply_to: Ipv6Address
    call_id: int


@dataclass(frozen=True, slots=True)
class CallAccept:
    call_id: int


@dataclass(frozen=True, slots=True)
class CallReject:
    call_id: int
    reason: str


#: Reject reason returned for any call placed to a prime home address.
PRIME_REJECT_REASON = "request a disposable home address"


@dataclass(frozen=True, slots=True)
class PeerBindingUpdate:
    """Route-optimization care-of address notice sent directly to a peer."""

    home_address: Ipv6Address
    care_of: Ipv6Address


@dataclass(frozen=True, slots=True)
class RouteOptimized:
    """Direct-to-care-of delivery carrying the logical home-address packet."""

    inner: object  # a Packet whose dst is the home address

