"""Digest and signature primitives behind a small pluggable interface.

The default scheme is Ed25519 with keys derived from a 32-byte seed, so a
fixed seed gives a fully deterministic key pair and signature stream.
"""

from __future__ import annotations

import abc
import hashlib
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .model import AppIdentity, AppManifest

DIGEST_SIZE = 32


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class KeyPair:
    private: bytes
    public: bytes


class SignatureScheme(abc.ABC):
    name: str

    @abc.abstractmethod
    def keypair(self, seed: bytes) -> KeyPair: ...

    @abc.abstractmethod
    def sign(self, private: bytes, message: bytes) -> bytes: ...

    @abc.abstractmethod
    def verify(self, public: bytes, message: bytes, signature: bytes) -> bool: ...


class Ed25519Scheme(SignatureScheme):
    name = "ed25519"

    def keypair(self, seed: bytes) -> KeyPair:
        seed = digest(seed) if len(seed) != 32 else seed
        sk = Ed25519PrivateKey.from_private_bytes(seed)
        pk = sk.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw
        )
        return KeyPair(seed, pk)

    def sign(self, private: bytes, message: bytes) -> bytes:
        return Ed25519PrivateKey.from_private_bytes(private).sign(message)

    def verify(self, public: bytes, message: bytes, signature: bytes) -> bool:
        try:
            Ed25519PublicKey.from_public_bytes(public).verify(signature, message)
        except (InvalidSignature, ValueError):
            return False
        return True


DEFAULT_SCHEME: SignatureScheme = Ed25519Scheme()


class CertificateAuthority:
    """Issues application identities binding name, binary digest and manifest."""

    def __init__(self, seed: bytes = b"dronemac-ca", scheme: SignatureScheme = DEFAULT_SCHEME):
        self.scheme = scheme
        self.keys = scheme.keypair(seed)

    @property
    def public_key(self) -> bytes:
        return self.keys.public

    def issue(self, name: str, image: bytes, manifest: AppManifest) -> AppIdentity:
        unsigned = AppIdentity(name, digest(image), manifest)
        cert = self.scheme.sign(self.keys.private, unsigned.signed_payload())
        return AppIdentity(name, unsigned.binary_digest, manifest, cert)

    def check(self, identity: AppIdentity) -> bool:
        return verify_identity(identity, self.public_key, self.scheme)


def verify_identity(identity: AppIdentity, ca_public: bytes, scheme=DEFAULT_SCHEME) -> bool:
    return scheme.verify(ca_public, identity.signed_payload(), identity.certificate)
