"""Airspace authority: host and red-zone registry plus flight-plan vetting.

The registry is an append-only JSON-lines file; each line is one record::

    {"kind": "host", "id": "host-1", "polygon": [[lat, lon], ...], "policy": "<policy file>"}
    {"kind": "redzone", "id": "redzone-1", "polygon": [[lat, lon], ...]}
    {"kind": "drone", "id": "drone-1", "key": "<hex public key>"}

Opening an authority on an existing file replays it.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from typing import Optional

from ..crypto import DEFAULT_SCHEME, SignatureScheme
from ..errors import UnknownDrone
from ..model import CommunicationGraph
from ..policy.format import parse_policy, serialize_policy
from .artifact import IssuedPolicy, PermissionArtifact, PlanVerdict
from .geometry import GeoPolygon, intersects

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HostRecord:
    host_id: str
    polygon: GeoPolygon
    policy_text: str


@dataclass(frozen=True)
class RedZoneRecord:
    zone_id: str
    polygon: GeoPolygon


class Authority:
    def __init__(
        self,
        registry_path: Optional[str] = None,
        seed: bytes = b"airspace-authority",
        scheme: SignatureScheme = DEFAULT_SCHEME,
    ):
        self.path = registry_path
        self.scheme = scheme
        self.keys = scheme.keypair(seed)
        self.hosts: dict[str, HostRecord] = {}
        self.redzones: dict[str, RedZoneRecord] = {}
        self.drones: dict[bytes, str] = {}
        if self.path and os.path.exists(self.path):
            self._replay()

    @property
    def public_key(self) -> bytes:
        return self.keys.public

    def _replay(self):
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    self._apply(json.loads(line))
                except (ValueError, KeyError) as exc:
                    raise ValueError(f"{self.path}:{lineno}: bad registry record: {exc}") from None

    def _apply(self, rec: dict):
        kind = rec["kind"]
        if kind == "host":
            poly = GeoPolygon(tuple(map(tuple, rec["polygon"])))
            self.hosts[rec["id"]] = HostRecord(rec["id"], poly, rec["policy"])
        elif kind == "redzone":
            poly = GeoPolygon(tuple(map(tuple, rec["polygon"])))
            self.redzones[rec["id"]] = RedZoneRecord(rec["id"], poly)
        elif kind == "drone":
            self.drones[bytes.fromhex(rec["key"])] = rec["id"]
        else:
            raise ValueError(f"unknown record kind {kind!r}")

    def _append(self, rec: dict):
        self._apply(rec)
        if self.path:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    def _next_id(self, prefix: str, taken) -> str:
        n = len(taken) + 1
        while f"{prefix}-{n}" in taken:
            n += 1
        return f"{prefix}-{n}"

    @staticmethod
    def _polygon(polygon) -> GeoPolygon:
        if isinstance(polygon, GeoPolygon):
            return polygon
        return GeoPolygon(tuple(polygon))

    def register_host(self, polygon, policy, host_id: Optional[str] = None) -> str:
        poly = self._polygon(polygon)
        text = serialize_policy(policy) if isinstance(policy, CommunicationGraph) else str(policy)
        parse_policy(text)  # reject unparseable policies at the door
        hid = host_id or self._next_id("host", self.hosts)
        if hid in self.hosts:
            raise ValueError(f"host {hid!r} already registered")
        self._append({"kind": "host", "id": hid, "polygon": poly.to_list(), "policy": text})
        log.info("registered host %s", hid)
        return hid

    def register_redzone(self, polygon, zone_id: Optional[str] = None) -> str:
        poly = self._polygon(polygon)
        zid = zone_id or self._next_id("redzone", self.redzones)
        if zid in self.redzones:
            raise ValueError(f"red zone {zid!r} already registered")
        self._append({"kind": "redzone", "id": zid, "polygon": poly.to_list()})
        return zid

    def register_drone(self, public_key: bytes, drone_id: Optional[str] = None) -> str:
        if public_key in self.drones:
            return self.drones[public_key]
        did = drone_id or self._next_id("drone", set(self.drones.values()))
        self._append({"kind": "drone", "id": did, "key": public_key.hex()})
        return did

    def submit_flight_plan(self, drone_key: bytes, region) -> PermissionArtifact:
        if drone_key not in self.drones:
            raise UnknownDrone(drone_key.hex())
        region = self._polygon(region)
        for zid in self.redzones:
            if intersects(region, self.redzones[zid].polygon):
                art = PermissionArtifact(drone_key, region, PlanVerdict.REJECTED, zid)
                return art.sign(self.keys.private, self.scheme)
        issued = tuple(
            IssuedPolicy(h.host_id, h.polygon, h.policy_text)
            for h in self.hosts.values()
            if intersects(region, h.polygon)
        )
        art = PermissionArtifact(drone_key, region, PlanVerdict.APPROVED, None, issued)
        return art.sign(self.keys.private, self.scheme)
