"""Home-agent node: address allocation, binding cache, interception, blocking.

The agent owns one /64 home prefix. Every packet whose destination falls in
the prefix lands here; active home addresses are tunneled to the owner's
current care-of address, blocked and unknown ones are dropped with no error
to the sender. Host-to-agent management runs over an authenticated channel
modeled as a shared opaque security-association tag: messages with a wrong
tag are silently ignored.
"""

from dataclasses import dataclass, field
from enum import Enum

from .addressing import AddressRole, AddressState, Ipv6Address, random_iid
from .engine import Node, Packet, Simulator

ADMIN_IID = 1
MAX_ALLOCATION_ATTEMPTS = 128


class ManagementKind(Enum):
    HOA_REQUEST = "hoa_request"
    HOA_GRANT = "hoa_grant"
    BLOCK_REQUEST = "block_request"
    REACTIVATE_REQUEST = "reactivate_request"
    ACK = "ack"


@dataclass(frozen=True, slots=True)
class ManagementMessage:
    """Host/agent management protocol unit, honored only with a valid tag."""

    kind: ManagementKind
    host_id: str
    auth: str
    hoa: Ipv6Address | None = None
    coa: Ipv6Address | None = None
    ok: bool = True
    info: str = ""


@dataclass(frozen=True, slots=True)
class BindingUpdate:
    """Care-of address report; authenticated like management traffic."""

    host_id: str
    auth: str
    care_of: Ipv6Address


@dataclass(frozen=True, slots=True)
class BindingAck:
    ok: bool
    care_of: Ipv6Address


@dataclass(frozen=True, slots=True)
class Encapsulated:
    """Agent-to-host tunnel wrapper around an intercepted packet."""

    inner: Packet


@dataclass(frozen=True, slots=True)
class ReverseTunneled:
    """Host-to-agent wrapper; the agent decapsulates and forwards."""

    inner: Packet
    host_id: str
    auth: str


@dataclass(slots=True)
class AgentCounters:
    intercepted: int = 0
    tunneled: int = 0
    dropped_blocked: int = 0
    dropped_unknown: int = 0
    rejected_management: int = 0

    def conserved(self) -> bool:
        return self.intercepted == (self.tunneled + self.dropped_blocked
                                    + self.dropped_unknown)


@dataclass(slots=True)
class AddressEntry:
    owner: str
    role: AddressRole
    state: AddressState


@dataclass(slots=True)
class HostBinding:
    sa_tag: str
    care_of: Ipv6Address | None = None
    addresses: set[Ipv6Address] = field(default_factory=set)


class AgentError(Exception):
    pass


class AuthenticationError(AgentError):
    pass


class OwnershipError(AgentError):
    pass


class UnknownHostError(AgentError):
    pass


class PoolExhaustedError(AgentError):
    pass


@dataclass(frozen=True, slots=True)
class Ack:
    ok: bool
    info: str = ""


class HomeAgent(Node):
    def __init__(self, sim: Simulator, node_id: str, prefix: int):
        super().__init__(sim, node_id)
        self.prefix = prefix
        self.admin_address = Ipv6Address(prefix, ADMIN_IID)
        self.counters = AgentCounters()
        self._hosts: dict[str, HostBinding] = {}
        self._entries: dict[Ipv6Address, AddressEntry] = {}
        sim.register_prefix_route(prefix, node_id)

    # -- registration -------------------------------------------------------

    def attach_host(self, host_id: str, sa_tag: str,
                    care_of: Ipv6Address | None = None) -> None:
        if host_id in self._hosts:
            raise AgentError(f"host {host_id} already attached")
        self._hosts[host_id] = HostBinding(sa_tag=sa_tag, care_of=care_of)

    def _authenticated(self, host_id: str, auth: str) -> HostBinding:
        binding = self._hosts.get(host_id)
        if binding is None:
            raise UnknownHostError(host_id)
        if binding.sa_tag != auth:
            raise AuthenticationError(f"bad security-association tag for {host_id}")
        return binding

    # -- management operations ----------------------------------------------

    def generate_home_address(self, host_id: str, auth: str,
                              role: AddressRole = AddressRole.DISPOSABLE) -> Ipv6Address:
        """Allocate a fresh collision-checked home address bound to the host."""
        binding = self._authenticated(host_id, auth)
        for _ in range(MAX_ALLOCATION_ATTEMPTS):
            candidate = Ipv6Address(self.prefix, random_iid(self.sim.rng))
            if candidate.iid == ADMIN_IID or candidate in self._entries:
                continue
            self._entries[candidate] = AddressEntry(
                owner=host_id, role=role, state=AddressState.ACTIVE)
            binding.addresses.add(candidate)
            return candidate
        raise PoolExhaustedError("could not find a free interface identifier")

    def process_binding_update(self, host_id: str, auth: str,
                               care_of: Ipv6Address) -> Ack:
        """Move every home address of the host (blocked ones included) to `care_of`."""
        binding = self._authenticated(host_id, auth)
        binding.care_of = care_of
        return Ack(ok=True)

    def block_address(self, host_id: str, auth: str, hoa: Ipv6Address) -> Ack:
        entry = self._owned_entry(host_id, auth, hoa)
        if entry.state is AddressState.DECONFIGURED:
            return Ack(ok=False, info="address deconfigured")
        entry.state = AddressState.BLOCKED
        return Ack(ok=True)

    def reactivate_address(self, host_id: str, auth: str, hoa: Ipv6Address) -> Ack:
        entry = self._owned_entry(host_id, auth, hoa)
        if entry.state is AddressState.DECONFIGURED:
            return Ack(ok=False, info="address deconfigured")
        entry.state = AddressState.ACTIVE
        return Ack(ok=True)

    def deconfigure_address(self, host_id: str, auth: str, hoa: Ipv6Address) -> Ack:
        """Terminal removal; unlike blocking there is no way back."""
        entry = self._owned_entry(host_id, auth, hoa)
        entry.state = AddressState.DECONFIGURED
        return Ack(ok=True)

    def _owned_entry(self, host_id: str, auth: str, hoa: Ipv6Address) -> AddressEntry:
        self._authenticated(host_id, auth)
        entry = self._entries.get(hoa)
        if entry is None or entry.owner != host_id:
            raise OwnershipError(f"{hoa} is not a home address of {host_id}")
        return entry

    # -- queries --------------------------------------------------------------

    def binding_of(self, host_id: str) -> Ipv6Address | None:
        binding = self._hosts.get(host_id)
        if binding is None:
            raise UnknownHostError(host_id)
        return binding.care_of

    def addresses_of(self, host_id: str) -> set[Ipv6Address]:
        binding = self._hosts.get(host_id)
        if binding is None:
            raise UnknownHostError(host_id)
        return set(binding.addresses)

    def state_of(self, hoa: Ipv6Address) -> AddressState | None:
        entry = self._entries.get(hoa)
        return entry.state if entry else None

    def live_address_count(self) -> int:
        return len(self._entries)

    # -- data path ---------------------------------------------------------

    def on_packet(self, packet: Packet) -> None:
        if packet.dst == self.admin_address:
            self._handle_admin(packet)
            return
        self.intercept(packet)

    def intercept(self, packet: Packet) -> None:
        """Tunnel to the owner's care-of address, or drop in silence."""
        self.counters.intercepted += 1
        entry = self._entries.get(packet.dst)
        if entry is None or entry.state is AddressState.DECONFIGURED:
            self.counters.dropped_unknown += 1
            return
        if entry.state is AddressState.BLOCKED:
            self.counters.dropped_blocked += 1
            return
        care_of = self._hosts[entry.owner].care_of
        if care_of is None:
            self.counters.dropped_unknown += 1
            return
        self.counters.tunneled += 1
        self.sim.send(Packet(src=self.admin_address, dst=care_of,
                             payload=Encapsulated(inner=packet),
                             size_bytes=packet.size_bytes + 40))

    def reverse_tunnel(self, host_id: str, auth: str, inner: Packet) -> bool:
        """Decapsulate and forward a host's outbound packet.

        The inner source must be a home address of the host. Blocked
        addresses still relay: blocking filters the inbound direction only.
        """
        try:
            self._authenticated(host_id, auth)
        except AgentError:
            self.counters.rejected_management += 1
            return False
        entry = self._entries.get(inner.src)
        if (entry is None or entry.owner != host_id
                or entry.state is AddressState.DECONFIGURED):
            return False
        self.sim.send(inner)
        return True

    def _handle_admin(self, packet: Packet) -> None:
        payload = packet.payload
        if isinstance(payload, ReverseTunneled):
            self.reverse_tunnel(payload.host_id, payload.auth, payload.inner)
            return
        if isinstance(payload, BindingUpdate):
            try:
                self.process_binding_update(payload.host_id, payload.auth,
                                            payload.care_of)
            except AgentError:
                self.counters.rejected_management += 1
                return
            self.sim.send(Packet(src=self.admin_address, dst=payload.care_of,
                                 payload=BindingAck(ok=True,
                                                    care_of=payload.care_of)))
            return
        if not isinstance(payload, ManagementMessage):
            return
        try:
            reply = self._apply_management(payload)
        except AgentError:
            # Unauthenticated or malformed requests are never honored and
            # never answered.
            self.counters.rejected_management += 1
            return
        care_of = self._hosts[payload.host_id].care_of
        if care_of is not None:
            self.sim.send(Packet(src=self.admin_address, dst=care_of,
                                 payload=reply))

    def _apply_management(self, msg: ManagementMessage) -> ManagementMessage:
        if msg.kind is ManagementKind.HOA_REQUEST:
            hoa = self.generate_home_address(msg.host_id, msg.auth)
            return ManagementMessage(kind=ManagementKind.HOA_GRANT,
                                     host_id=msg.host_id, auth=msg.auth, hoa=hoa)
        if msg.kind is ManagementKind.BLOCK_REQUEST:
            ack = self.block_address(msg.host_id, msg.auth, msg.hoa)
        elif msg.kind is ManagementKind.REACTIVATE_REQUEST:
            ack = self.reactivate_address(msg.host_id, msg.auth, msg.hoa)
        else:
            ack = Ack(ok=False, info=f"unsupported kind {msg.kind}")
        return ManagementMessage(kind=ManagementKind.ACK, host_id=msg.host_id,
                                 auth=msg.auth, hoa=msg.hoa, ok=ack.ok,
                                 info=ack.info)

    def on_timer(self, token: object) -> None:  # pragma: no cover - no timers
        pass
