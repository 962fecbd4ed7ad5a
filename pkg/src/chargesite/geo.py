"""Coordinate arithmetic for the siting study area.

Distances are weighted L1 (Manhattan) on an equirectangular scale. At the
latitudes of a single city this is accurate well below a tenth of a percent.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

LAT_KM_PER_DEG = 111.194
LON_KM_PER_DEG = 85.3  # 111.194 * cos(39.89 deg)


@dataclass(frozen=True)
class GeoPoint:
    lon: float
    lat: float

    def __post_init__(self):
        # numpy scalars would leak into repr() based CSV output
        object.__setattr__(self, "lon", float(self.lon))
        object.__setattr__(self, "lat", float(self.lat))
        if not (math.isfinite(self.lon) and math.isfinite(self.lat)):
            raise ValueError(f"non-finite coordinate ({self.lon}, {self.lat})")
        if not (-180.0 <= self.lon <= 180.0 and -90.0 <= self.lat <= 90.0):
            raise ValueError(f"coordinate out of range ({self.lon}, {self.lat})")


@dataclass(frozen=True)
class DegreeScale:
    """Kilometers per degree along each axis."""

    lat_km: float = LAT_KM_PER_DEG
    lon_km: float = LON_KM_PER_DEG

    def __post_init__(self):
        if not (self.lat_km > 0 and self.lon_km > 0):
            raise ValueError("degree scale factors must be positive")
        if not (math.isfinite(self.lat_km) and math.isfinite(self.lon_km)):
            raise ValueError("degree scale factors must be finite")


DEFAULT_SCALE = DegreeScale()


@dataclass(frozen=True)
class BoundingBox:
    lon_min: float
    lon_max: float
    lat_min: float
    lat_max: float

    def __post_init__(self):
        if not (self.lon_min < self.lon_max and self.lat_min < self.lat_max):
            raise ValueError(f"degenerate bounding box {self}")

    def contains(self, p: GeoPoint) -> bool:
        return in_bbox(p, self)

    def strictly_inside(self, other: "BoundingBox") -> bool:
        """True when every edge of self lies strictly inside ``other``."""
        return (
            other.lon_min < self.lon_min
            and self.lon_max < other.lon_max
            and other.lat_min < self.lat_min
            and self.lat_max < other.lat_max
        )

    def expanded(self, margin_deg: float) -> "BoundingBox":
        return BoundingBox(
            self.lon_min - margin_deg,
            self.lon_max + margin_deg,
            self.lat_min - margin_deg,
            self.lat_max + margin_deg,
        )

    def clamp(self, p: GeoPoint) -> GeoPoint:
        lon = min(max(p.lon, self.lon_min), self.lon_max)
        lat = min(max(p.lat, self.lat_min), self.lat_max)
        if lon == p.lon and lat == p.lat:
            return p
        return GeoPoint(lon, lat)

    @property
    def center(self) -> GeoPoint:
        return GeoPoint((self.lon_min + self.lon_max) / 2, (self.lat_min + self.lat_max) / 2)


# Beijing fifth ring road as an axis-aligned box.
FIFTH_RING = BoundingBox(lon_min=116.2, lon_max=116.55, lat_min=39.75, lat_max=40.03)


class RingZone(enum.Enum):
    INNER3 = "Inner3"
    RING3TO4 = "Ring3To4"
    OUTER = "Outer"


@dataclass(frozen=True)
class RingConfig:
    ring3: BoundingBox
    ring4: BoundingBox

    def __post_init__(self):
        if not self.ring3.strictly_inside(self.ring4):
            raise ValueError("ring3 must lie strictly inside ring4")


# Axis-aligned stand-ins for the 3rd and 4th ring roads.
DEFAULT_RINGS = RingConfig(
    ring3=BoundingBox(lon_min=116.30, lon_max=116.45, lat_min=39.85, lat_max=39.97),
    ring4=BoundingBox(lon_min=116.27, lon_max=116.48, lat_min=39.82, lat_max=40.00),
)


def manhattan_km(a: GeoPoint, b: GeoPoint, scale: DegreeScale = DEFAULT_SCALE) -> float:
    """Weighted L1 distance between two points, in kilometers."""
    return abs(a.lat - b.lat) * scale.lat_km + abs(a.lon - b.lon) * scale.lon_km


def in_bbox(p: GeoPoint, box: BoundingBox) -> bool:
    # closed on every edge
    return box.lon_min <= p.lon <= box.lon_max and box.lat_min <= p.lat <= box.lat_max


def zone_of(p: GeoPoint, rings: RingConfig = DEFAULT_RINGS) -> RingZone:
    if in_bbox(p, rings.ring3):
        return RingZone.INNER3
    if in_bbox(p, rings.ring4):
        return RingZone.RING3TO4
    return RingZone.OUTER


def centroid(points: Sequence[GeoPoint] | Iterable[GeoPoint]) -> GeoPoint:
    """Arithmetic mean of longitudes and latitudes.

    Raises:
        ValueError: if ``points`` is empty.
    """
    pts = list(points)
    if not pts:
        raise ValueError("empty point set")
    lon = math.fsum(p.lon for p in pts) / len(pts)
    lat = math.fsum(p.lat for p in pts) / len(pts)
    return GeoPoint(lon, lat)


def to_km_xy(points: Sequence[GeoPoint], scale: DegreeScale = DEFAULT_SCALE):
    """Project points onto a planar (x, y) km grid as an ``(n, 2)`` array."""
    arr = np.array([(p.lon, p.lat) for p in points], dtype=float).reshape(-1, 2)
    arr[:, 0] *= scale.lon_km
    arr[:, 1] *= scale.lat_km
    return arr
