"""Unit-sphere geometry in geographic coordinates.

All public angles are degrees: longitudes in [-180, 180), latitudes in
[-90, 90], bearings in [0, 360) with 0 = due north (increasing latitude)
and clockwise toward east. Conversions to radians happen only inside the
functions here, never at module boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Discrete action set for scanpath directions.
EIGHT_DIRECTIONS = tuple(45.0 * k for k in range(8))

_POLE_EPS_DEG = 1e-12
_LAT_SLACK_DEG = 1e-9
_DEGENERATE_DIST_DEG = 1e-12


class UndefinedBearingError(ValueError):
    """Initial bearing between identical or antipodal points is undefined."""


def wrap_lon(lon_deg: float) -> float:
    """Normalize a longitude into [-180, 180)."""
    return (lon_deg + 180.0) % 360.0 - 180.0


def wrap_bearing(deg: float) -> float:
    """Normalize a bearing into [0, 360)."""
    return deg % 360.0


@dataclass(frozen=True)
class GeoPos:
    """A point on the unit sphere, longitude/latitude in degrees.

    Constructors normalize longitude into [-180, 180); the poles
    canonicalize longitude to 0. Latitudes beyond +/-90 by more than a
    tiny numerical slack are rejected.
    """

    lon: float
    lat: float

    def __post_init__(self):
        lat = float(self.lat)
        if abs(lat) > 90.0:
            if abs(lat) - 90.0 > _LAT_SLACK_DEG:
                raise ValueError(f"latitude out of range: {lat!r}")
            lat = math.copysign(90.0, lat)
        lon = wrap_lon(float(self.lon))
        if 90.0 - abs(lat) <= _POLE_EPS_DEG:
            lon = 0.0
        object.__setattr__(self, "lon", lon)
        object.__setattr__(self, "lat", lat)


FRONT_CENTER = GeoPos(0.0, 0.0)


def unit_vector(p: GeoPos) -> np.ndarray:
    """Cartesian unit vector; x toward (0,0), y toward (90,0), z to the north pole."""
    lam = math.radians(p.lon)
    phi = math.radians(p.lat)
    return np.array(
        [math.cos(phi) * math.cos(lam), math.cos(phi) * math.sin(lam), math.sin(phi)]
    )


def great_circle_dist(a: GeoPos, b: GeoPos) -> float:
    """Great-circle distance in degrees, in [0, 180].

    Haversine form: numerically stable for small separations where the
    dot-product arccos loses half the significant digits.
    """
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = phi2 - phi1
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    h = min(1.0, max(0.0, h))
    return math.degrees(2.0 * math.asin(math.sqrt(h)))


def great_circle_dist_many(p: GeoPos, lons_deg: np.ndarray, lats_deg: np.ndarray) -> np.ndarray:
    """Vectorized haversine distance (degrees) from one point to many."""
    phi1 = math.radians(p.lat)
    phi2 = np.radians(lats_deg)
    dphi = phi2 - phi1
    dlam = np.radians(lons_deg - p.lon)
    h = np.sin(dphi / 2.0) ** 2 + math.cos(phi1) * np.cos(phi2) * np.sin(dlam / 2.0) ** 2
    return np.degrees(2.0 * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0))))


def phase_diff(a_deg: float, b_deg: float) -> float:
    """Minimal absolute angular difference of two bearings, in [0, 180]."""
    return abs((a_deg - b_deg + 180.0) % 360.0 - 180.0)


def phase_diff_many(a_deg: float, b_deg: np.ndarray) -> np.ndarray:
    return np.abs((a_deg - b_deg + 180.0) % 360.0 - 180.0)


def geodesic_step(p: GeoPos, bearing_deg: float, dist_deg: float) -> GeoPos:
    """Destination after travelling `dist_deg` along the great circle that
    leaves `p` with initial bearing `bearing_deg`.
    """
    if dist_deg < 0.0:
        raise ValueError(f"negative step magnitude: {dist_deg!r}")
    if dist_deg > 180.0 + _LAT_SLACK_DEG:
        raise ValueError(f"step magnitude beyond half circle: {dist_deg!r}")
    if dist_deg == 0.0:
        return p
    phi1 = math.radians(p.lat)
    theta = math.radians(wrap_bearing(bearing_deg))
    d = math.radians(dist_deg)
    sin_phi2 = math.sin(phi1) * math.cos(d) + math.cos(phi1) * math.sin(d) * math.cos(theta)
    sin_phi2 = min(1.0, max(-1.0, sin_phi2))
    phi2 = math.asin(sin_phi2)
    dlam = math.atan2(
        math.sin(theta) * math.sin(d) * math.cos(phi1),
        math.cos(d) - math.sin(phi1) * sin_phi2,
    )
    return GeoPos(p.lon + math.degrees(dlam), math.degrees(phi2))


def bearing_between(a: GeoPos, b: GeoPos) -> float:
    """Initial great-circle bearing from `a` to `b`, degrees in [0, 360).

    Raises UndefinedBearingError for identical or antipodal endpoints;
    callers substitute bearing 0 with magnitude 0 for the identical case.
    """
    d = great_circle_dist(a, b)
    if d <= _DEGENERATE_DIST_DEG:
        raise UndefinedBearingError(f"identical endpoints: {a} -> {b}")
    if d >= 180.0 - 1e-9:
        raise UndefinedBearingError(f"antipodal endpoints: {a} -> {b}")
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dlam = math.radians(b.lon - a.lon)
    y = math.sin(dlam) * math.cos(phi2)
    x = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(dlam)
    return wrap_bearing(math.degrees(math.atan2(y, x)))
