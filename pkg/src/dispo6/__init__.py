"""Disposable Mobile IPv6 home addresses: protocol library and simulator.

A mobile host hands a different "disposable" home address to every
correspondent. When one address is abused (battery-drain floods, spam
calls), the owner blocks just that address at its home agent; everyone
else stays reachable. This package provides the protocol machinery
(home agent, mobile host, address-distribution handshake with CAPTCHA
escalation, certificateless short-authentication-string pairing), the
adversary and battery models, and a deterministic discrete-event
simulator with a scenario CLI.
"""

__version__ = "0.1.0"

from .addressing import AddressRole, AddressState, Ipv6Address, NameService
from .engine import LinkModel, Packet, SimTime, Simulator

__all__ = [
    "AddressRole",
    "AddressState",
    "Ipv6Address",
    "LinkModel",
    "NameService",
    "Packet",
    "SimTime",
    "Simulator",
]
