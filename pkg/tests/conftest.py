from dataclasses import dataclass

import pytest

from dispo6.addressing import NameService
from dispo6.crypto import CertificateAuthority, Ed25519Scheme
from dispo6.engine import LinkModel, Simulator
from dispo6.home_agent import HomeAgent

HOME_PREFIX = 0x20010DB800010000
VISITED_PREFIX = 0x20010DB801000000
PEER_PREFIX = 0x20010DB800CC0000
ATTACKER_PREFIX = 0x20010DB8BEEF0000


@dataclass
class World:
    sim: Simulator
    names: NameService
    agent: HomeAgent
    scheme: Ed25519Scheme | None
    ca: CertificateAuthority | None


@pytest.fixture
def make_world():
    def build(seed: int = 0, latency_s: float = 0.05,
              loss_probability: float = 0.0, pki: bool = False,
              keep_trace: bool = False) -> World:
        sim = Simulator(seed, LinkModel(latency_s, loss_probability),
                        keep_trace=keep_trace)
        names = NameService()
        scheme = Ed25519Scheme() if pki else None
        ca = CertificateAuthority(scheme, sim.rng) if pki else None
        agent = HomeAgent(sim, "home-agent", HOME_PREFIX)
        return World(sim=sim, names=names, agent=agent, scheme=scheme, ca=ca)

    return build
