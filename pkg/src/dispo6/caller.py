"""Static correspondent node: requests a disposable address, then calls.

Correspondents are plain Internet hosts. The contact manager behavior
mirrors the mobile host's: a call goes to the stored disposable when one
is held and not known dead; otherwise the distribution handshake runs
first and the grant is remembered.
"""

import itertools
from dataclasses import dataclass
from typing import Callable

from .addressing import Ipv6Address, NameService, UnknownNameError
from .crypto import Certificate, CertificateAuthority, Ed25519Scheme, KeyPair
from .distribution import (
    AddressResponse,
    HipChallengeMsg,
    InitiatorSession,
    Refusal,
    RequestOutcome,
    RequestResult,
    SessionTimer,
)
from .engine import Node, Packet, Simulator
from .messages import (
    CallAccept,
    CallReject,
    CallRequest,
    PeerBindingUpdate,
    Ping,
    Pong,
    RouteOptimized,
)
from .mobile_host import CallOutcome, CallTimeout


@dataclass(slots=True)
class PeerEntry:
    peer_fqdn: str
    peer_address: Ipv6Address | None = None
    peer_known_blocked: bool = False
    peer_pubkey: bytes | None = None


@dataclass(frozen=True, slots=True)
class StartCall:
    """Scheduler token: place one call at the drawn time of day."""

    target_fqdn: str
    day: int
    correspondent_id: int
    coincides_with_attack: bool


@dataclass(slots=True)
class _PendingCall:
    peer_fqdn: str
    on_result: Callable[[CallOutcome], None]
    done: bool = False


class CallerNode(Node):
    def __init__(self, sim: Simulator, node_id: str, fqdn: str,
                 address: Ipv6Address, name_service: NameService, *,
                 scheme: Ed25519Scheme | None = None,
                 keys: KeyPair | None = None,
                 certificate: Certificate | None = None,
                 ca: CertificateAuthority | None = None,
                 require_signed_response: bool = False,
                 call_timeout_s: float = 3.0,
                 request_timeout_s: float = 3.0,
                 solve_hip: bool = True):
        super().__init__(sim, node_id)
        self.fqdn = fqdn
        self.address = address
        self.name_service = name_service
        self.scheme = scheme
        self.keys = keys
        self.certificate = certificate
        self.ca = ca
        self.require_signed_response = require_signed_response
        self.call_timeout_s = call_timeout_s
        self.request_timeout_s = request_timeout_s
        self.solve_hip = solve_hip
        self.entries: dict[str, PeerEntry] = {}
        self.calls_connected = 0
        self.calls_failed = 0
        self.on_start_call: Callable[["CallerNode", StartCall], None] | None = None
        self._route_cache: dict[Ipv6Address, Ipv6Address] = {}
        self._sessions: dict[int, InitiatorSession] = {}
        self._pending: dict[int, _PendingCall] = {}
        self._request_ids = itertools.count(1)
        self._call_ids = itertools.count(1)
        sim.register_route(address, node_id)

    # -- bookkeeping -------------------------------------------------------

    def entry_for(self, fqdn: str) -> PeerEntry:
        return self.entries.setdefault(fqdn, PeerEntry(fqdn))

    def has_address_for(self, fqdn: str) -> bool:
        entry = self.entries.get(fqdn)
        return (entry is not None and entry.peer_address is not None
                and not entry.peer_known_blocked)

    def learn_address(self, fqdn: str, address: Ipv6Address,
                      pubkey: bytes | None = None) -> None:
        """Out-of-band grant (in person, e-mail, messaging)."""
        entry = self.entry_for(fqdn)
        entry.peer_address = address
        entry.peer_known_blocked = False
        if pubkey is not None:
            entry.peer_pubkey = pubkey

    # -- protocol ------------------------------------------------------------

    def request_address(self, target_fqdn: str,
                        on_done: Callable[[RequestResult], None],
                        solve_hip: bool | None = None) -> None:
        target_prime = self.name_service.resolve(target_fqdn)
        request_id = next(self._request_ids)

        def finish(result: RequestResult) -> None:
            self._sessions.pop(request_id, None)
            if result.outcome is RequestOutcome.GRANTED:
                self.learn_address(target_fqdn, result.granted,
                                   result.responder_key)
            on_done(result)

        session = InitiatorSession(
            self.sim, self.node_id,
            requester_name=self.fqdn.split(".")[0],
            requester_fqdn=self.fqdn,
            source=self.address,
            target_prime=target_prime,
            target_fqdn=target_fqdn,
            request_id=request_id,
            on_done=finish,
            scheme=self.scheme, keys=self.keys, certificate=self.certificate,
            ca=self.ca, require_signed_response=self.require_signed_response,
            timeout_s=self.request_timeout_s,
            solve_hip=self.solve_hip if solve_hip is None else solve_hip)
        self._sessions[request_id] = session
        session.start()

    def place_call(self, target_fqdn: str,
                   on_result: Callable[[CallOutcome], None]) -> None:
        entry = self.entry_for(target_fqdn)
        if entry.peer_address is not None and not entry.peer_known_blocked:
            self._start_call(entry, on_result)
            return
        try:
            self.request_address(
                target_fqdn,
                lambda result: self._after_handshake(entry, result, on_result))
        except UnknownNameError:
            on_result(CallOutcome.FAILED)

    def _after_handshake(self, entry: PeerEntry, result: RequestResult,
                         on_result: Callable[[CallOutcome], None]) -> None:
        if result.outcome is RequestOutcome.GRANTED:
            self._start_call(entry, on_result)
        elif result.outcome is RequestOutcome.REFUSED:
            on_result(CallOutcome.REJECTED_BY_CALLEE)
        elif result.outcome is RequestOutcome.TIMEOUT:
            on_result(CallOutcome.REJECTED_PRIME_BLOCKED)
        else:
            on_result(CallOutcome.FAILED)

    def _start_call(self, entry: PeerEntry,
                    on_result: Callable[[CallOutcome], None]) -> None:
        call_id = next(self._call_ids)
        self._pending[call_id] = _PendingCall(peer_fqdn=entry.peer_fqdn,
                                              on_result=on_result)
        self._send_app(entry.peer_address,
                       CallRequest(caller_fqdn=self.fqdn, reply_to=self.address,
                                   call_id=call_id))
        self.sim.call_in(self.call_timeout_s, self.node_id, CallTimeout(call_id))

    def _finish_call(self, call_id: int, outcome: CallOutcome) -> None:
        pending = self._pending.pop(call_id, None)
        if pending is None or pending.done:
            return
        pending.done = True
        if outcome is CallOutcome.CONNECTED:
            self.calls_connected += 1
        else:
            self.calls_failed += 1
            if outcome is CallOutcome.FAILED:
                self.entry_for(pending.peer_fqdn).peer_known_blocked = True
        pending.on_result(outcome)

    def _send_app(self, dst: Ipv6Address, payload: object) -> None:
        care_of = self._route_cache.get(dst)
        inner = Packet(src=self.address, dst=dst, payload=payload)
        if care_of is None:
            self.sim.send(inner)
        else:
            self.sim.send(Packet(src=self.address, dst=care_of,
                                 payload=RouteOptimized(inner=inner)))

    # -- engine callbacks --------------------------------------------------------

    def on_packet(self, packet: Packet) -> None:
        payload = packet.payload
        if isinstance(payload, (AddressResponse, HipChallengeMsg, Refusal)):
            session = self._sessions.get(payload.request_id)
            if session is not None:
                session.on_message(payload)
            return
        if isinstance(payload, CallAccept):
            self._finish_call(payload.call_id, CallOutcome.CONNECTED)
            return
        if isinstance(payload, CallReject):
            self._finish_call(payload.call_id, CallOutcome.REJECTED_BY_CALLEE)
            return
        if isinstance(payload, PeerBindingUpdate):
            self._route_cache[payload.home_address] = payload.care_of
            return
        if isinstance(payload, Ping):
            self.sim.send(Packet(src=self.address, dst=packet.src,
                                 payload=Pong(payload.seq)))

    def on_timer(self, token: object) -> None:
        if isinstance(token, SessionTimer):
            session = self._sessions.get(token.request_id)
            if session is not None:
                session.on_timer(token)
            return
        if isinstance(token, CallTimeout):
            self._finish_call(token.call_id, CallOutcome.FAILED)
            return
        if isinstance(token, StartCall) and self.on_start_call is not None:
            self.on_start_call(self, token)
