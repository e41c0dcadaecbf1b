import random

import pytest

from dispo6.addressing import AddressState, Ipv6Address
from dispo6.crypto import CertificateAuthority, Ed25519Scheme
from dispo6.distribution import (
    AddressRequest,
    AddressResponse,
    ChallengeAction,
    DistributionResponder,
    GrantAction,
    HipAnswer,
    HipGate,
    PermissionDecision,
    RefuseAction,
    RequestOutcome,
)
from dispo6.engine import SimTime
from dispo6.mobile_host import CallOutcome
from test_mobile_host import call_once, make_caller, make_host

HOME_PREFIX = 0x20010DB800010000
PEER = Ipv6Address(0x20010DB800CC0000, 9)


def make_responder(pki=False, hip=None, permission=None, rng_seed=0):
    rng = random.Random(rng_seed)
    scheme = Ed25519Scheme() if pki else None
    ca = CertificateAuthority(scheme, rng) if pki else None
    keys = scheme.generate(rng) if pki else None
    cert = ca.issue("bob.example", keys.public) if pki else None
    pool = iter(Ipv6Address(HOME_PREFIX, 0x1000 + i) for i in range(10_000))
    states: dict[Ipv6Address, AddressState] = {}

    def allocate():
        hoa = next(pool)
        states[hoa] = AddressState.ACTIVE
        return hoa

    responder = DistributionResponder(
        owner_fqdn="bob.example", allocate=allocate,
        address_state=lambda hoa: states.get(hoa),
        scheme=scheme, keys=keys, certificate=cert, ca=ca,
        pki_required=pki, hip=hip, permission=permission)
    return responder, states, (scheme, ca, rng)


def request(fqdn="alice.example", request_id=1, hip_answer=None,
            signer=None):
    req = AddressRequest(requester_name=fqdn.split(".")[0],
                         requester_fqdn=fqdn, extra_info="",
                         reply_to=PEER, request_id=request_id,
                         hip_answer=hip_answer)
    if signer is not None:
        scheme, ca, rng = signer
        keys = scheme.generate(rng)
        cert = ca.issue(fqdn, keys.public)
        req = AddressRequest(requester_name=req.requester_name,
                             requester_fqdn=fqdn, extra_info="",
                             reply_to=PEER, request_id=request_id,
                             signature=scheme.sign(keys, req.signed_bytes()),
                             certificate=cert, hip_answer=hip_answer)
    return req


class TestResponderGates:
    def test_default_policy_grants(self):
        responder, states, _ = make_responder()
        action = responder.handle_request(request(), SimTime(0))
        assert isinstance(action, GrantAction)
        assert states[action.response.granted] is AddressState.ACTIVE

    def test_repeat_request_returns_same_address(self):
        responder, _, _ = make_responder()
        first = responder.handle_request(request(request_id=1), SimTime(0))
        second = responder.handle_request(request(request_id=2), SimTime(1_000_000))
        assert first.response.granted == second.response.granted

    def test_distinct_identities_distinct_addresses(self):
        responder, _, _ = make_responder()
        granted = set()
        for i in range(20):
            action = responder.handle_request(
                request(fqdn=f"peer{i}.example", request_id=i), SimTime(i))
            granted.add(action.response.granted)
        assert len(granted) == 20

    def test_blocked_grant_replaced_on_rerequest(self):
        responder, states, _ = make_responder()
        first = responder.handle_request(request(request_id=1), SimTime(0))
        states[first.response.granted] = AddressState.BLOCKED
        second = responder.handle_request(request(request_id=2), SimTime(1))
        assert second.response.granted != first.response.granted

    def test_denied_identity_refused(self):
        responder, _, _ = make_responder()
        responder.denied.add("alice.example")
        action = responder.handle_request(request(), SimTime(0))
        assert isinstance(action, RefuseAction)
        assert responder.notifications  # the user said no; they were asked

    def test_custom_permission_policy(self):
        responder, _, _ = make_responder(
            permission=lambda req: PermissionDecision.REFUSE)
        assert isinstance(responder.handle_request(request(), SimTime(0)),
                          RefuseAction)

    def test_unsigned_request_in_pki_mode_never_reaches_policy(self):
        responder, _, _ = make_responder(pki=True)
        action = responder.handle_request(request(), SimTime(0))
        assert action is None
        assert responder.notifications == []
        assert responder.dropped_bad_signature == 1

    def test_signed_request_in_pki_mode_grants(self):
        responder, _, signer = make_responder(pki=True)
        action = responder.handle_request(request(signer=signer), SimTime(0))
        assert isinstance(action, GrantAction)
        assert action.response.signature != b""

    def test_tampered_signature_dropped(self):
        responder, _, signer = make_responder(pki=True)
        req = request(signer=signer)
        bad = AddressRequest(requester_name=req.requester_name,
                             requester_fqdn=req.requester_fqdn,
                             extra_info="tampered",  # signature no longer covers
                             reply_to=req.reply_to,
                             request_id=req.request_id,
                             signature=req.signature,
                             certificate=req.certificate)
        assert responder.handle_request(bad, SimTime(0)) is None


class TestHipGate:
    def gate(self):
        return HipGate(rate_threshold=3, window_s=600.0,
                       base_difficulty_s=5.0, ttl_s=300.0)

    def test_slow_rate_unchallenged(self):
        gate = self.gate()
        for hour in range(6):
            now = SimTime.from_hours(hour)
            gate.observe("alice", now)
            assert not gate.challenge_required("alice", now)

    def test_rate_gate_trips_on_fourth_in_window(self):
        gate = self.gate()
        for i in range(3):
            gate.observe("alice", SimTime.from_seconds(i))
            assert not gate.challenge_required("alice", SimTime.from_seconds(i))
        gate.observe("alice", SimTime.from_seconds(3))
        assert gate.challenge_required("alice", SimTime.from_seconds(3))

    def test_difficulty_doubles_per_violation_window(self):
        gate = self.gate()
        difficulties = []
        for window in range(3):
            base = window * 600.0
            for i in range(10):
                now = SimTime.from_seconds(base + i * 6)
                gate.observe("alice", now)
                if gate.challenge_required("alice", now):
                    challenge = gate.issue("alice", now, request_id=i)
            difficulties.append(challenge.difficulty_s)
        assert difficulties == [5.0, 10.0, 20.0]

    def test_verify_single_use_and_replay(self):
        gate = self.gate()
        challenge = gate.issue("alice", SimTime(0), request_id=1)
        answer = HipAnswer(challenge.challenge_id,
                           HipGate.solution(challenge.challenge_id))
        assert gate.verify(answer, SimTime.from_seconds(10))
        assert not gate.verify(answer, SimTime.from_seconds(11))  # replay

    def test_wrong_answer_fails(self):
        gate = self.gate()
        challenge = gate.issue("alice", SimTime(0), request_id=1)
        assert not gate.verify(HipAnswer(challenge.challenge_id, b"nope"),
                               SimTime.from_seconds(1))

    def test_expired_challenge_fails(self):
        gate = self.gate()
        challenge = gate.issue("alice", SimTime(0), request_id=1)
        answer = HipAnswer(challenge.challenge_id,
                           HipGate.solution(challenge.challenge_id))
        assert not gate.verify(answer, SimTime.from_seconds(301))


class TestGateOrdering:
    def test_no_notification_without_pass_while_gate_active(self):
        gate = HipGate(rate_threshold=3, window_s=600.0)
        responder, _, _ = make_responder(hip=gate)
        notified_without_pass = 0
        # 10 requests/minute from one identity, never answering challenges
        for i in range(10):
            now = SimTime.from_seconds(i * 6)
            before = len(responder.notifications)
            action = responder.handle_request(
                request(request_id=i), now)
            gated = gate.challenge_required("alice.example", now)
            if gated and len(responder.notifications) > before:
                notified_without_pass += 1
            if gated:
                assert isinstance(action, ChallengeAction)
        assert notified_without_pass == 0
        assert len(responder.notifications) == 3  # only the pre-gate requests

    def test_correct_answer_yields_exactly_one_notification(self):
        gate = HipGate(rate_threshold=1, window_s=600.0)
        responder, _, _ = make_responder(hip=gate)
        responder.handle_request(request(request_id=1), SimTime(0))
        action = responder.handle_request(request(request_id=2), SimTime(1))
        assert isinstance(action, ChallengeAction)
        notifications_before = len(responder.notifications)
        answer = HipAnswer(action.challenge.challenge_id,
                           HipGate.solution(action.challenge.challenge_id))
        granted = responder.handle_request(
            request(request_id=2, hip_answer=answer), SimTime.from_seconds(2))
        assert isinstance(granted, GrantAction)
        assert len(responder.notifications) == notifications_before + 1


class TestEngineHandshake:
    def test_fresh_peer_pki_grant_verified(self, make_world):
        world = make_world(pki=True)
        host = make_host(world)
        caller = make_caller(world)
        results = []
        caller.request_address(host.fqdn, results.append)
        world.sim.run()
        assert len(results) == 1
        assert results[0].outcome is RequestOutcome.GRANTED
        assert results[0].granted.prefix == HOME_PREFIX
        assert results[0].responder_key == host.keys.public

    def test_repeated_engine_request_same_address(self, make_world):
        world = make_world(pki=True)
        host = make_host(world)
        caller = make_caller(world)
        results = []
        caller.request_address(host.fqdn, results.append)
        world.sim.run()
        caller.request_address(host.fqdn, results.append)
        world.sim.run()
        assert results[0].granted == results[1].granted

    def test_request_to_blocked_prime_times_out(self, make_world):
        world = make_world(pki=True)
        host = make_host(world)
        caller = make_caller(world)
        host.dispose_address(host.prime, auto_reactivate=False)
        world.sim.run()
        results = []
        caller.request_address(host.fqdn, results.append)
        world.sim.run()
        assert results[0].outcome is RequestOutcome.TIMEOUT

    def test_tampered_response_aborts_no_call(self, make_world):
        world = make_world(pki=True)
        host = make_host(world)
        caller = make_caller(world)
        original = caller.on_packet

        def corrupt(packet):
            payload = packet.payload
            if isinstance(payload, AddressResponse):
                payload = AddressResponse(
                    granted=payload.granted,
                    request_digest=payload.request_digest,
                    request_id=payload.request_id,
                    signature=b"\x00" * len(payload.signature),
                    certificate=payload.certificate)
                packet = type(packet)(src=packet.src, dst=packet.dst,
                                      payload=payload,
                                      size_bytes=packet.size_bytes)
            original(packet)

        caller.on_packet = corrupt
        outcome = call_once(world, caller, host.fqdn)
        assert outcome is CallOutcome.FAILED
        assert host.counters.calls_received == 0  # no call was placed

    def test_bot_that_cannot_solve_gets_nothing(self, make_world):
        world = make_world()
        host = make_host(world)
        bot = make_caller(world, i=3, solve_hip=False)
        results = []
        notifications_before = len(host.responder.notifications)
        for i in range(8):
            bot.request_address(host.fqdn, results.append)
            world.sim.run()
        granted = [r for r in results if r.outcome is RequestOutcome.GRANTED]
        timeouts = [r for r in results if r.outcome is RequestOutcome.TIMEOUT]
        assert len(granted) == 3  # before the rate gate trips
        assert len(timeouts) == 5
        assert len(host.responder.notifications) == notifications_before + 3

    def test_patient_human_solves_and_is_granted(self, make_world):
        world = make_world()
        host = make_host(world)
        human = make_caller(world, i=4, solve_hip=True,
                            request_timeout_s=3.0)
        results = []
        for i in range(5):
            human.request_address(host.fqdn, results.append)
            world.sim.run()
        assert all(r.outcome is RequestOutcome.GRANTED for r in results)
        assert host.responder.hip.challenges_issued >= 2
        assert host.responder.hip.passes >= 2
