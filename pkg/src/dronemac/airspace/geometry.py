"""Planar polygons over (latitude, longitude) pairs.

Coordinates are treated as plane coordinates; at the scale of a campus or a
neighbourhood the distortion is irrelevant to fence logic.  Membership is
boundary inclusive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .. import kernels
from ..errors import InvalidPolygon


@dataclass(frozen=True)
class GeoPolygon:
    vertices: tuple

    def __post_init__(self):
        try:
            verts = tuple((float(lat), float(lon)) for lat, lon in self.vertices)
        except (TypeError, ValueError) as exc:
            raise InvalidPolygon(f"bad vertex list: {exc}") from None
        if any(not (math.isfinite(a) and math.isfinite(b)) for a, b in verts):
            raise InvalidPolygon("non-finite coordinate")
        if len(verts) < 3:
            raise InvalidPolygon(f"need at least 3 vertices, got {len(verts)}")
        if not kernels.is_simple(verts):
            raise InvalidPolygon("polygon is not simple")
        object.__setattr__(self, "vertices", verts)

    def contains(self, lat: float, lon: float) -> bool:
        return kernels.point_in_polygon(self.vertices, float(lat), float(lon))

    def bbox(self) -> tuple:
        lats = [v[0] for v in self.vertices]
        lons = [v[1] for v in self.vertices]
        return min(lats), min(lons), max(lats), max(lons)

    def to_list(self) -> list:
        return [list(v) for v in self.vertices]

    def to_text(self) -> str:
        return "".join(f"{lat!r} {lon!r}\n" for lat, lon in self.vertices)


def intersects(a: GeoPolygon, b: GeoPolygon) -> bool:
    a0, a1, a2, a3 = a.bbox()
    b0, b1, b2, b3 = b.bbox()
    if a2 < b0 or b2 < a0 or a3 < b1 or b3 < a1:
        return False
    return kernels.polygons_intersect(a.vertices, b.vertices)


def parse_polygon(text: str) -> GeoPolygon:
    """One ``lat lon`` pair per line; blank lines and ``#`` comments ignored."""
    verts = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise InvalidPolygon(f"line {lineno}: expected 'lat lon'")
        try:
            verts.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise InvalidPolygon(f"line {lineno}: bad number") from None
    return GeoPolygon(tuple(verts))
