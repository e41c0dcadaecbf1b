"""Pluggable hash/signature primitives and the canonical transcript encoding.

Canonical encoding, used everywhere bytes are signed or hashed together:
each field is prefixed with its length as 4 bytes big-endian, then the
fields are concatenated in argument order. Length prefixes make the
encoding injective, which the pairing security argument relies on.

Protocol logic never looks inside a primitive; the defaults are SHA-256
and Ed25519. Key material is drawn from the caller's seeded RNG so runs
stay reproducible.
"""

import hashlib
import random
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import (
    Encoding,
    PublicFormat,
)


def encode_fields(*fields: bytes) -> bytes:
    out = bytearray()
    for field in fields:
        out += len(field).to_bytes(4, "big")
        out += field
    return bytes(out)


class Sha256Hash:
    name = "sha256"

    @staticmethod
    def digest(data: bytes) -> bytes:
        return hashlib.sha256(data).digest()


@dataclass(frozen=True, slots=True)
class KeyPair:
    public: bytes
    private: object


class Ed25519Scheme:
    """Default signature scheme. Deterministic signing, 32-byte public keys."""

    name = "ed25519"

    def generate(self, rng: random.Random) -> KeyPair:
        private = Ed25519PrivateKey.from_private_bytes(rng.randbytes(32))
        public = private.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
        return KeyPair(public=public, private=private)

    def sign(self, keys: KeyPair, message: bytes) -> bytes:
        return keys.private.sign(message)

    def verify(self, public: bytes, message: bytes, signature: bytes) -> bool:
        try:
            Ed25519PublicKey.from_public_bytes(public).verify(signature, message)
            return True
        except (InvalidSignature, ValueError):
            return False


@dataclass(frozen=True, slots=True)
class Certificate:
    """Binding of a subject name to a public key, signed by one stub CA."""

    subject: str
    public_key: bytes
    signature: bytes

    def signed_bytes(self) -> bytes:
        return encode_fields(self.subject.encode(), self.public_key)


class CertificateAuthority:
    """Single-CA trust store; real PKI deployment is out of scope."""

    def __init__(self, scheme: Ed25519Scheme, rng: random.Random):
        self.scheme = scheme
        self._keys = scheme.generate(rng)

    @property
    def public_key(self) -> bytes:
        return self._keys.public

    def issue(self, subject: str, public_key: bytes) -> Certificate:
        body = encode_fields(subject.encode(), public_key)
        return Certificate(subject=subject, public_key=public_key,
                           signature=self.scheme.sign(self._keys, body))

    def verify(self, certificate: Certificate) -> bool:
        return self.scheme.verify(self.public_key, certificate.signed_bytes(),
                                  certificate.signature)
