"""Airspace authority, permission artifacts and the drone-side geofence."""

from .artifact import IssuedPolicy, PermissionArtifact, PlanVerdict
from .authority import Authority
from .geofence import EventKind, GeofenceEvent, GeofenceMonitor, diff_events
from .geometry import GeoPolygon, intersects, parse_polygon

__all__ = [
    "Authority",
    "EventKind",
    "GeoPolygon",
    "GeofenceEvent",
    "GeofenceMonitor",
    "IssuedPolicy",
    "PermissionArtifact",
    "PlanVerdict",
    "diff_events",
    "intersects",
    "parse_polygon",
]
