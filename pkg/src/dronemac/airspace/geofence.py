"""Drone-side geofence monitor: GPS fixes drive policy load and unload."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Optional

from ..crypto import DEFAULT_SCHEME
from ..errors import NoArtifact, SignatureInvalid
from ..model import CommunicationGraph, intersect_graphs
from ..policy.format import parse_policy
from ..policy.loader import bind_and_load
from .artifact import PermissionArtifact

log = logging.getLogger(__name__)


class EventKind(enum.Enum):
    ENTER = "ENTER"
    EXIT = "EXIT"
    REGION_EXIT = "REGION_EXIT"
    REGION_ENTER = "REGION_ENTER"


@dataclass(frozen=True)
class GeofenceEvent:
    kind: EventKind
    host: Optional[str] = None

    def __str__(self):
        return f"{self.kind.value}({self.host})" if self.host else self.kind.value


def diff_events(before: set, after: set) -> list:
    """EXIT events (sorted by host) followed by ENTER events (sorted by host)."""
    return [GeofenceEvent(EventKind.EXIT, h) for h in sorted(before - after)] + [
        GeofenceEvent(EventKind.ENTER, h) for h in sorted(after - before)
    ]


class GeofenceMonitor:
    """Tracks which host airspaces contain the drone and enforces their policies.

    Overlapping hosts compose by graph intersection.  With no host active the
    ``baseline`` graph is restored (or the policy unloaded when there is none).
    Leaving the approved flight region raises a ``REGION_EXIT`` event and
    freezes the active policy until the drone is back inside the region.
    """

    def __init__(
        self,
        runtime,
        artifact: Optional[PermissionArtifact],
        authority_public: bytes,
        baseline: Optional[CommunicationGraph] = None,
        scheme=DEFAULT_SCHEME,
    ):
        if artifact is None:
            raise NoArtifact("no permission artifact")
        if not artifact.verify(authority_public, scheme):
            raise SignatureInvalid("permission artifact signature does not verify")
        if not artifact.approved:
            raise NoArtifact(f"flight plan rejected (red zone {artifact.redzone})")
        self.runtime = runtime
        self.artifact = artifact
        self.baseline = baseline
        self.policies = {p.host_id: (p.polygon, parse_policy(p.policy_text)) for p in artifact.policies}
        self.inside: set = set()
        self.in_region = True
        self._frozen = False
        self.history: list = []
        self.activations: list = []

    def hosts_at(self, lat: float, lon: float) -> set:
        return {h for h, (poly, _) in self.policies.items() if poly.contains(lat, lon)}

    def on_gps_update(self, lat: float, lon: float) -> list:
        now = self.hosts_at(lat, lon)
        events = diff_events(self.inside, now)
        self.inside = now
        stale = bool(events) or self._frozen
        in_region = self.artifact.region.contains(lat, lon)
        if in_region != self.in_region:
            kind = EventKind.REGION_ENTER if in_region else EventKind.REGION_EXIT
            events.append(GeofenceEvent(kind))
            self.in_region = in_region
            if not in_region:
                log.warning("left approved flight region at (%s, %s)", lat, lon)
        if not in_region:
            self._frozen = self._frozen or stale
        elif stale:
            self._frozen = False
            self._apply()
        self.history.extend(events)
        return events

    def _apply(self):
        graphs = [self.policies[h][1] for h in sorted(self.inside)]
        if graphs:
            rec = bind_and_load(intersect_graphs(graphs), self.runtime, strict=False)
            self.activations.append(("load", tuple(sorted(self.inside)), rec.activation.graph_version))
        elif self.baseline is not None:
            rec = bind_and_load(self.baseline, self.runtime, strict=False)
            self.activations.append(("baseline", (), rec.activation.graph_version))
        else:
            rec = self.runtime.refmon.unload_policy()
            self.activations.append(("unload", (), rec.graph_version))

