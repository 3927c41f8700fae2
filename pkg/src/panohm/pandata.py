"""Panoramic frame containers, viewport extraction, traces, and heat maps.

Frames are 8-bit grayscale equirectangular rasters (width = 2 x height);
column 0 is longitude -180, row 0 is latitude +90, and pixel centers sit
at half-cell offsets. Observations are 42x42 luma grids in [0, 1] rendered
gnomonically from a 103x60 degree zero-roll viewport.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .sphere import (
    GeoPos,
    UndefinedBearingError,
    bearing_between,
    great_circle_dist,
    wrap_lon,
)

OBS_SIZE = 42
FOV_LON_DEG = 103.0
FOV_LAT_DEG = 60.0

DEFAULT_MAP_WIDTH = 256
DEFAULT_MAP_HEIGHT = 128
DEFAULT_SMOOTH_SIGMA_DEG = 10.0


@dataclass
class Frame:
    """One equirectangular grayscale video frame."""

    pixels: np.ndarray  # (height, width) uint8

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.dtype != np.uint8:
            raise ValueError("frame pixels must be a 2D uint8 array")
        h, w = px.shape
        if w != 2 * h:
            raise ValueError(f"frame must be 2:1 equirectangular, got {w}x{h}")
        if w < 64:
            raise ValueError(f"frame width must be >= 64, got {w}")
        self.pixels = px

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class ScanpathStep:
    """Per-frame head-movement unit: direction (bearing) and magnitude."""

    direction_deg: float
    magnitude_deg: float

    def __post_init__(self):
        if self.magnitude_deg < 0.0:
            raise ValueError("scanpath magnitude must be non-negative")


@dataclass
class HMTrace:
    """One subject's per-frame head positions for one video."""

    video_id: str
    subject_id: str
    positions: list = field(default_factory=list)  # list[GeoPos], one per frame

    def __len__(self) -> int:
        return len(self.positions)


@dataclass
class HMMap:
    """Non-negative scalar field over an equirectangular raster."""

    values: np.ndarray  # (height, width) float64

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("map values must be 2D")
        if np.any(v < 0.0) or not np.all(np.isfinite(v)):
            raise ValueError("map values must be finite and non-negative")
        self.values = v

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


# ---------------------------------------------------------------------------
# Viewport extraction


def _ray_grid(size: int = OBS_SIZE):
    """Tangent-plane ray components for the 103x60 viewport, pixel centers.

    Returns (a, b, inv_norm): azimuthal and elevational tangent offsets per
    sample and the inverse ray norms. Cached; rays never change.
    """
    tan_az = math.tan(math.radians(FOV_LON_DEG / 2.0))
    tan_el = math.tan(math.radians(FOV_LAT_DEG / 2.0))
    # Sample centers: column j covers azimuth [-51.5 + j*da, ...), row 0 at top.
    az = (np.arange(size) + 0.5) / size * 2.0 - 1.0
    el = 1.0 - (np.arange(size) + 0.5) / size * 2.0
    a = np.tile(az * tan_az, (size, 1))
    b = np.tile((el * tan_el)[:, None], (1, size))
    inv_norm = 1.0 / np.sqrt(1.0 + a * a + b * b)
    return a, b, inv_norm


_RAYS = _ray_grid()


def extract_fov(frame: Frame, center: GeoPos) -> np.ndarray:
    """Render the 103x60 degree zero-roll viewport at `center` as a 42x42
    observation in [0, 1], sampled bilinearly from the equirectangular frame.

    The center longitude enters only as a column offset, so shifting the
    center by an integer number of frame columns reproduces the observation
    of the correspondingly rolled frame exactly.
    """
    a, b, inv_norm = _RAYS
    h, w = frame.height, frame.width
    phi = math.radians(center.lat)
    cos_phi, sin_phi = math.cos(phi), math.sin(phi)
    # Camera basis at (lon=0, lat=phi): forward + a*east + b*north.
    x = cos_phi - b * sin_phi
    z = sin_phi + b * cos_phi
    lat_s = np.degrees(np.arcsin(np.clip(z * inv_norm, -1.0, 1.0)))
    lon_rel = np.degrees(np.arctan2(a, x))

    col = (lon_rel + 180.0) * (w / 360.0) - 0.5 + center.lon * (w / 360.0)
    row = (90.0 - lat_s) * (h / 180.0) - 0.5

    c0 = np.floor(col).astype(np.int64)
    fc = col - c0
    c0m = np.mod(c0, w)
    c1m = np.mod(c0 + 1, w)
    r0 = np.clip(np.floor(row).astype(np.int64), 0, h - 2)
    fr = np.clip(row - r0, 0.0, 1.0)

    px = frame.pixels.astype(np.float64)
    top = px[r0, c0m] * (1.0 - fc) + px[r0, c1m] * fc
    bot = px[r0 + 1, c0m] * (1.0 - fc) + px[r0 + 1, c1m] * fc
    return (top * (1.0 - fr) + bot * fr) / 255.0


# ---------------------------------------------------------------------------
# Scanpaths


def derive_scanpath(trace: HMTrace) -> list[ScanpathStep]:
    """Per-frame (direction, magnitude) steps between consecutive positions.

    Stationary steps canonicalize to (0 deg, 0). Antipodal consecutive
    positions are rejected: no head moves half the sphere in one frame.
    """
    if len(trace) < 2:
        raise ValueError("trace must hold at least two positions")
    steps = []
    for p, q in zip(trace.positions, trace.positions[1:]):
        d = great_circle_dist(p, q)
        if d >= 180.0 - 1e-9:
            raise ValueError(
                f"antipodal consecutive positions in trace "
                f"{trace.video_id}/{trace.subject_id}"
            )
        try:
            steps.append(ScanpathStep(bearing_between(p, q), d))
        except UndefinedBearingError:
            steps.append(ScanpathStep(0.0, 0.0))
    return steps


def integrate_scanpath(start: GeoPos, steps) -> list:
    """Re-integrate steps from a start position; inverse of derive_scanpath."""
    from .sphere import geodesic_step

    positions = [start]
    for s in steps:
        positions.append(geodesic_step(positions[-1], s.direction_deg, s.magnitude_deg))
    return positions


# ---------------------------------------------------------------------------
# Heat maps


def map_lon_centers(width: int) -> np.ndarray:
    return -180.0 + (np.arange(width) + 0.5) * (360.0 / width)


def map_lat_centers(height: int) -> np.ndarray:
    return 90.0 - (np.arange(height) + 0.5) * (180.0 / height)


def raster_cell(pos: GeoPos, width: int, height: int) -> tuple[int, int]:
    """(row, col) of the raster cell containing `pos`."""
    col = int((wrap_lon(pos.lon) + 180.0) / 360.0 * width) % width
    row = min(height - 1, int((90.0 - pos.lat) / 180.0 * height))
    return row, col


def build_hm_map(
    positions,
    width: int = DEFAULT_MAP_WIDTH,
    height: int = DEFAULT_MAP_HEIGHT,
    sigma_deg: float = DEFAULT_SMOOTH_SIGMA_DEG,
) -> HMMap:
    """Sum of 2D Gaussians in (lon, lat) degrees, longitude wrapped, then
    normalized to peak 1.
    """
    positions = list(positions)
    if not positions:
        raise ValueError("at least one position is required to build a map")
    if sigma_deg <= 0.0:
        raise ValueError("smoothing sigma must be positive")
    lon_c = map_lon_centers(width)
    lat_c = map_lat_centers(height)
    lon_w = np.empty((len(positions), width))
    lat_w = np.empty((len(positions), height))
    inv2s2 = 0.5 / (sigma_deg * sigma_deg)
    for i, p in enumerate(positions):
        dlon = (lon_c - p.lon + 180.0) % 360.0 - 180.0
        lon_w[i] = np.exp(-dlon * dlon * inv2s2)
        dlat = lat_c - p.lat
        lat_w[i] = np.exp(-dlat * dlat * inv2s2)
    values = lat_w.T @ lon_w
    return HMMap(values / values.max())
