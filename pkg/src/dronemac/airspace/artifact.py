"""Signed permission artifact issued by the airspace authority.

Byte layout (big-endian, same conventions as attestation reports)::

    magic      4 bytes  b"NPNT"
    version    u8       1
    drone key  u32 length + bytes
    region     u32 vertex count, then f64 lat, f64 lon per vertex
    verdict    u8 (1 approved, 0 rejected)
    red zone   u32 length + utf-8 id (empty when approved)
    policies   u32 count, then per policy:
                 u32 length + utf-8 host id
                 polygon as for region
                 u32 length + utf-8 serialized policy file
    signature  u32 length + bytes

The signature covers every byte before the signature field.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Optional

from ..crypto import DEFAULT_SCHEME, SignatureScheme
from ..errors import EncodingError
from ..wire import Reader, Writer
from .geometry import GeoPolygon

MAGIC = b"NPNT"
VERSION = 1


class PlanVerdict(enum.Enum):
    APPROVED = "APPROVED"
    REJECTED = "REJECTED"


@dataclass(frozen=True)
class IssuedPolicy:
    host_id: str
    polygon: GeoPolygon
    policy_text: str


@dataclass(frozen=True)
class PermissionArtifact:
    drone_key: bytes
    region: GeoPolygon
    verdict: PlanVerdict
    redzone: Optional[str] = None
    policies: tuple = ()
    signature: bytes = b""

    @property
    def approved(self) -> bool:
        return self.verdict is PlanVerdict.APPROVED

    def body(self) -> bytes:
        w = Writer().raw(MAGIC).u8(VERSION).blob(self.drone_key)
        _polygon(w, self.region)
        w.u8(1 if self.approved else 0).text(self.redzone or "")
        w.u32(len(self.policies))
        for p in self.policies:
            w.text(p.host_id)
            _polygon(w, p.polygon)
            w.text(p.policy_text)
        return w.getvalue()

    def encode(self) -> bytes:
        return self.body() + Writer().blob(self.signature).getvalue()

    @classmethod
    def decode(cls, data: bytes) -> "PermissionArtifact":
        r = Reader(data)
        if r.raw(4) != MAGIC:
            raise EncodingError("bad artifact magic")
        if r.u8() != VERSION:
            raise EncodingError("unsupported artifact version")
        key = r.blob()
        region = _read_polygon(r)
        flag = r.u8()
        if flag not in (0, 1):
            raise EncodingError("bad verdict byte")
        redzone = r.text() or None
        policies = []
        for _ in range(r.u32()):
            host = r.text()
            poly = _read_polygon(r)
            policies.append(IssuedPolicy(host, poly, r.text()))
        sig = r.blob()
        r.expect_end()
        verdict = PlanVerdict.APPROVED if flag else PlanVerdict.REJECTED
        return cls(key, region, verdict, redzone, tuple(policies), sig)

    def sign(self, private: bytes, scheme: SignatureScheme = DEFAULT_SCHEME) -> "PermissionArtifact":
        return replace(self, signature=scheme.sign(private, self.body()))

    def verify(self, public: bytes, scheme: SignatureScheme = DEFAULT_SCHEME) -> bool:
        return scheme.verify(public, self.body(), self.signature)


def _polygon(w: Writer, poly: GeoPolygon):
    w.u32(len(poly.vertices))
    for lat, lon in poly.vertices:
        w.f64(lat).f64(lon)


def _read_polygon(r: Reader) -> GeoPolygon:
    n = r.u32()
    if n > 1_000_000:
        raise EncodingError("implausible vertex count")
    verts = tuple((r.f64(), r.f64()) for _ in range(n))
    try:
        return GeoPolygon(verts)
    except ValueError as exc:
        raise EncodingError(f"bad polygon: {exc}") from None
