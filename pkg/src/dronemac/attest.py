"""Simulated trusted execution environment: measured boot, launch log, attestation.

Report byte layout (all integers big-endian)::

    magic     4 bytes  b"DMAR"
    version   u8       1
    chain     u32 length + bytes          boot measurement chain value
    log       u32 count, then per entry:
                u32 length + utf-8 app name
                u32 length + binary digest
                u64 logical launch time
    nonce     u32 length + bytes
    signature u32 length + bytes

The signature covers ``b"DMAR-SIG" || u8 version || blob(chain) ||
blob(H(encoded log)) || blob(nonce)`` under the drone key.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional

from . import crypto
from .errors import AlreadyMeasured, EncodingError, NotBooted
from .wire import Reader, Writer

IV = bytes(crypto.DIGEST_SIZE)
MAGIC = b"DMAR"
VERSION = 1


def chain_extend(prev: bytes, component_digest: bytes) -> bytes:
    return crypto.digest(prev + component_digest)


@dataclass(frozen=True)
class MeasurementChain:
    components: tuple = ()

    @property
    def value(self) -> bytes:
        v = crypto.digest(IV)
        for _, d in self.components:
            v = chain_extend(v, d)
        return v

    def extend(self, name: str, data: bytes) -> "MeasurementChain":
        return MeasurementChain(self.components + ((name, crypto.digest(data)),))

    @classmethod
    def of(cls, components: Iterable) -> "MeasurementChain":
        chain = cls()
        for name, data in components:
            chain = chain.extend(name, data)
        return chain


@dataclass(frozen=True)
class LaunchEntry:
    app: str
    digest: bytes
    time: int


@dataclass(frozen=True)
class AttestationReport:
    chain: bytes
    launch_log: tuple
    nonce: bytes
    signature: bytes = b""

    def log_digest(self) -> bytes:
        return crypto.digest(_encode_log(self.launch_log))

    def signed_message(self) -> bytes:
        return (
            Writer()
            .raw(b"DMAR-SIG")
            .u8(VERSION)
            .blob(self.chain)
            .blob(self.log_digest())
            .blob(self.nonce)
            .getvalue()
        )

    def encode(self) -> bytes:
        return (
            Writer()
            .raw(MAGIC)
            .u8(VERSION)
            .blob(self.chain)
            .raw(_encode_log(self.launch_log))
            .blob(self.nonce)
            .blob(self.signature)
            .getvalue()
        )

    @classmethod
    def decode(cls, data: bytes) -> "AttestationReport":
        r = Reader(data)
        if r.raw(4) != MAGIC:
            raise EncodingError("bad report magic")
        if r.u8() != VERSION:
            raise EncodingError("unsupported report version")
        chain = r.blob()
        entries = []
        for _ in range(r.u32()):
            entries.append(LaunchEntry(r.text(), r.blob(), r.u64()))
        nonce = r.blob()
        sig = r.blob()
        r.expect_end()
        return cls(chain, tuple(entries), nonce, sig)


def _encode_log(entries) -> bytes:
    w = Writer().u32(len(entries))
    for e in entries:
        w.text(e.app).blob(e.digest).u64(e.time)
    return w.getvalue()


class TrustedExecutionEnvironment:
    """Secure-world stand-in holding the drone key and the measurement state."""

    def __init__(self, seed: bytes = b"drone-key", scheme: crypto.SignatureScheme = crypto.DEFAULT_SCHEME):
        self.scheme = scheme
        self._keys = scheme.keypair(seed)
        self.chain: Optional[MeasurementChain] = None
        self._log: list[LaunchEntry] = []

    @property
    def public_key(self) -> bytes:
        return self._keys.public

    def measure_boot(self, components: Iterable) -> MeasurementChain:
        if self.chain is not None:
            raise AlreadyMeasured("boot already measured")
        self.chain = MeasurementChain.of(components)
        return self.chain

    def record_launch(self, app: str, image_digest: bytes, time: int = 0) -> LaunchEntry:
        if self.chain is None:
            raise NotBooted("launch before measured boot")
        entry = LaunchEntry(app, bytes(image_digest), int(time))
        self._log.append(entry)
        return entry

    @property
    def launch_log(self) -> tuple:
        return tuple(self._log)

    def attest(self, nonce: bytes) -> AttestationReport:
        if self.chain is None:
            raise NotBooted("attest before measured boot")
        report = AttestationReport(self.chain.value, self.launch_log, bytes(nonce))
        sig = self.scheme.sign(self._keys.private, report.signed_message())
        return replace(report, signature=sig)


@dataclass(frozen=True)
class VerifyResult:
    trusted: bool
    reason: Optional[str] = None

    def __bool__(self):
        return self.trusted

    def __str__(self):
        return "TRUSTED" if self.trusted else f"UNTRUSTED({self.reason})"


TRUSTED = VerifyResult(True)


def verify(
    report: AttestationReport,
    expected_chain: bytes,
    expected_apps: Mapping[str, bytes],
    public_key: bytes,
    nonce: bytes,
    scheme: crypto.SignatureScheme = crypto.DEFAULT_SCHEME,
) -> VerifyResult:
    """Check a report; the first failing check names the reason."""
    if not scheme.verify(public_key, report.signed_message(), report.signature):
        return VerifyResult(False, "signature")
    if report.nonce != nonce:
        return VerifyResult(False, "nonce")
    if report.chain != expected_chain:
        return VerifyResult(False, "chain")
    for app, want in sorted(expected_apps.items()):
        seen = [e for e in report.launch_log if e.app == app]
        if not seen:
            return VerifyResult(False, "missing-app")
        if any(e.digest != want for e in seen):
            return VerifyResult(False, "launch-digest-mismatch")
    return TRUSTED


@dataclass
class Verifier:
    """Challenger side with a single-use nonce cache."""

    public_key: bytes
    expected_chain: bytes
    expected_apps: Mapping[str, bytes] = field(default_factory=dict)
    scheme: crypto.SignatureScheme = crypto.DEFAULT_SCHEME
    _outstanding: set = field(default_factory=set)
    _used: set = field(default_factory=set)

    def challenge(self, nonce: Optional[bytes] = None) -> bytes:
        nonce = secrets.token_bytes(16) if nonce is None else bytes(nonce)
        if nonce in self._used:
            raise ValueError("nonce already used")
        self._outstanding.add(nonce)
        return nonce

    def verify(self, report: AttestationReport, nonce: bytes) -> VerifyResult:
        fresh = nonce in self._outstanding
        self._outstanding.discard(nonce)
        self._used.add(nonce)
        result = verify(
            report, self.expected_chain, self.expected_apps, self.public_key, nonce, self.scheme
        )
        if result and not fresh:
            return VerifyResult(False, "nonce")
        return result
