"""Synthetic panoramic worlds: moving bright blobs plus scripted viewers.

Desk-scale stand-in for a recorded head-movement database. Everything is
deterministic given the spec and a seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .pandata import Frame, HMTrace, map_lat_centers, map_lon_centers
from .sphere import GeoPos, UndefinedBearingError, bearing_between, geodesic_step, great_circle_dist


@dataclass(frozen=True)
class BlobPath:
    """Trajectory of one bright blob.

    kinds:
      fixed     -- stays at (lon, lat)
      orbit     -- constant-latitude drift, deg_per_frame added to longitude
      lissajous -- lon = lon_amp*sin(2*pi*t/lon_period + lon_phase),
                   lat = lat_amp*sin(2*pi*t/lat_period + lat_phase)
    """

    kind: str = "fixed"
    lon: float = 0.0
    lat: float = 0.0
    deg_per_frame: float = 0.0
    lon_amp: float = 0.0
    lat_amp: float = 0.0
    lon_period: float = 60.0
    lat_period: float = 45.0
    lon_phase_deg: float = 0.0
    lat_phase_deg: float = 0.0

    def position(self, t: int) -> GeoPos:
        if self.kind == "fixed":
            return GeoPos(self.lon, self.lat)
        if self.kind == "orbit":
            return GeoPos(self.lon + self.deg_per_frame * t, self.lat)
        if self.kind == "lissajous":
            lon = self.lon + self.lon_amp * math.sin(
                2.0 * math.pi * t / self.lon_period + math.radians(self.lon_phase_deg)
            )
            lat = self.lat + self.lat_amp * math.sin(
                2.0 * math.pi * t / self.lat_period + math.radians(self.lat_phase_deg)
            )
            return GeoPos(lon, lat)
        raise ValueError(f"unknown blob kind: {self.kind!r}")


@dataclass
class SynthSpec:
    video_id: str = "synth"
    width: int = 64
    height: int = 32
    frames: int = 100
    fps: float = 30.0
    background: int = 16
    blob_peak: int = 230
    blob_sigma_deg: float = 15.0
    blobs: list = field(default_factory=lambda: [BlobPath()])
    subjects: int = 4
    pursuit_gain: float = 1.0
    dir_noise_deg: float = 0.0
    mag_noise_deg: float = 0.0
    max_step_deg: float = 30.0

    def validate(self):
        if self.width != 2 * self.height or self.width < 64:
            raise ValueError("frame size must be 2:1 with width >= 64")
        if self.frames < 2:
            raise ValueError("need at least two frames")
        if not self.blobs:
            raise ValueError("need at least one blob")
        if self.subjects < 1:
            raise ValueError("need at least one subject")


def spec_from_json(text: str) -> SynthSpec:
    raw = json.loads(text)
    if not isinstance(raw, dict):
        raise ValueError("synthetic spec must be a JSON object")
    blobs = [BlobPath(**b) for b in raw.pop("blobs", [{}])]
    try:
        spec = SynthSpec(blobs=blobs, **raw)
    except TypeError as e:
        raise ValueError(f"bad synthetic spec: {e}") from e
    spec.validate()
    return spec


def render_frame(spec: SynthSpec, t: int) -> Frame:
    lon_c = map_lon_centers(spec.width)
    lat_c = map_lat_centers(spec.height)
    acc = np.zeros((spec.height, spec.width))
    inv2s2 = 0.5 / (spec.blob_sigma_deg**2)
    for blob in spec.blobs:
        p = blob.position(t)
        dlon = (lon_c - p.lon + 180.0) % 360.0 - 180.0
        dlat = lat_c - p.lat
        acc += np.outer(np.exp(-dlat * dlat * inv2s2), np.exp(-dlon * dlon * inv2s2))
    luma = spec.background + (spec.blob_peak - spec.background) * np.clip(acc, 0.0, 1.0)
    return Frame(np.clip(np.round(luma), 0, 255).astype(np.uint8))


def _pursue(spec: SynthSpec, blob: BlobPath, rng: np.random.Generator) -> list:
    pos = GeoPos(0.0, 0.0)  # viewers start at the front center
    positions = [pos]
    for t in range(spec.frames - 1):
        target = blob.position(t)
        dist = great_circle_dist(pos, target)
        try:
            direction = bearing_between(pos, target)
        except UndefinedBearingError:
            direction = 0.0
            dist = 0.0
        if spec.dir_noise_deg > 0.0:
            direction += rng.normal(0.0, spec.dir_noise_deg)
        mag = spec.pursuit_gain * dist
        if spec.mag_noise_deg > 0.0:
            mag += rng.normal(0.0, spec.mag_noise_deg)
        mag = min(max(mag, 0.0), spec.max_step_deg)
        pos = geodesic_step(pos, direction, mag)
        positions.append(pos)
    return positions


def gen_synthetic(spec: SynthSpec, seed: int) -> tuple[list, list]:
    """Render frames and script subject traces. Deterministic given `seed`."""
    spec.validate()
    frames = [render_frame(spec, t) for t in range(spec.frames)]
    child_seeds = np.random.SeedSequence(seed).spawn(spec.subjects)
    traces = []
    for m in range(spec.subjects):
        rng = np.random.default_rng(child_seeds[m])
        blob = spec.blobs[m % len(spec.blobs)]
        traces.append(
            HMTrace(
                video_id=spec.video_id,
                subject_id=f"s{m:02d}",
                positions=_pursue(spec, blob, rng),
            )
        )
    return frames, traces
