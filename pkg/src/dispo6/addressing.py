"""IPv6 addresses, home-address roles, and the in-simulation name service."""

import ipaddress
import random
from dataclasses import dataclass
from enum import Enum

IID_BITS = 64
IID_MASK = (1 << IID_BITS) - 1


@dataclass(frozen=True, order=True, slots=True)
class Ipv6Address:
    """128-bit address as a 64-bit network prefix plus a 64-bit interface ID."""

    prefix: int
    iid: int

    def __post_init__(self):
        if not 0 <= self.prefix <= IID_MASK:
            raise ValueError(f"prefix out of 64-bit range: {self.prefix:#x}")
        if not 0 <= self.iid <= IID_MASK:
            raise ValueError(f"iid out of 64-bit range: {self.iid:#x}")

    @property
    def value(self) -> int:
        return (self.prefix << IID_BITS) | self.iid

    @property
    def packed(self) -> bytes:
        return self.value.to_bytes(16, "big")

    @classmethod
    def from_value(cls, value: int) -> "Ipv6Address":
        return cls(prefix=value >> IID_BITS, iid=value & IID_MASK)

    @classmethod
    def parse(cls, text: str) -> "Ipv6Address":
        return cls.from_value(int(ipaddress.IPv6Address(text)))

    def __str__(self) -> str:
        # Canonical log format: eight lowercase 4-digit hex groups, no "::".
        return ipaddress.IPv6Address(self.value).exploded


def random_iid(rng: random.Random) -> int:
    """Uniform 64-bit interface identifier. Collisions are the caller's problem."""
    return rng.getrandbits(IID_BITS)


class AddressRole(Enum):
    PRIME = "prime"
    DISPOSABLE = "disposable"


class AddressState(Enum):
    ACTIVE = "active"
    BLOCKED = "blocked"
    DECONFIGURED = "deconfigured"


class UnknownNameError(Exception):
    """Lookup of a name that was never registered."""


class NameAuthorizationError(Exception):
    """A node other than the record owner tried to change the record."""


@dataclass(slots=True)
class NameRecord:
    fqdn: str
    prime: Ipv6Address
    owner: str


class NameService:
    """Maps FQDNs to prime home addresses.

    Stands in for DNS plus dynamic DNS: updates are owner-authorized and
    visible to the next lookup (no caching or TTLs).
    """

    def __init__(self):
        self._records: dict[str, NameRecord] = {}

    def register(self, fqdn: str, prime: Ipv6Address, owner: str) -> None:
        if not fqdn:
            raise ValueError("empty FQDN")
        if fqdn in self._records:
            raise ValueError(f"duplicate FQDN registration: {fqdn}")
        self._records[fqdn] = NameRecord(fqdn=fqdn, prime=prime, owner=owner)

    def resolve(self, fqdn: str) -> Ipv6Address:
        try:
            return self._records[fqdn].prime
        except KeyError:
            raise UnknownNameError(fqdn) from None

    def update_prime(self, fqdn: str, new_prime: Ipv6Address, caller: str) -> None:
        record = self._records.get(fqdn)
        if record is None:
            raise UnknownNameError(fqdn)
        if record.owner != caller:
            raise NameAuthorizationError(f"{caller} does not own {fqdn}")
        record.prime = new_prime

    def owner_of(self, fqdn: str) -> str:
        record = self._records.get(fqdn)
        if record is None:
            raise UnknownNameError(fqdn)
        return record.owner

    def known_names(self) -> list[str]:
        return sorted(self._records)
