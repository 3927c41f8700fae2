"""On-disk formats: PGM frames with a JSON manifest, trace CSVs, and raw
float32 heat-map files with JSON sidecars.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .pandata import Frame, HMMap, HMTrace
from .sphere import GeoPos


class StoreError(ValueError):
    """Malformed or inconsistent on-disk data."""


# ---------------------------------------------------------------------------
# PGM (P5, maxval 255)


def write_pgm(path, image: np.ndarray):
    img = np.asarray(image)
    if img.dtype != np.uint8 or img.ndim != 2:
        raise StoreError("PGM export expects a 2D uint8 array")
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    # Header: magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments allowed between them.
    tokens = []
    i = 0
    while len(tokens) < 4:
        if i >= len(data):
            raise StoreError(f"truncated PGM header: {path}")
        c = data[i : i + 1]
        if c == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j : j + 1].isspace():
                j += 1
            tokens.append(data[i:j])
            i = j
    if tokens[0] != b"P5":
        raise StoreError(f"not a binary PGM: {path}")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise StoreError(f"unsupported PGM maxval {maxval}: {path}")
    i += 1  # single whitespace after maxval
    raster = data[i : i + w * h]
    if len(raster) != w * h:
        raise StoreError(f"truncated PGM raster: {path}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()


# ---------------------------------------------------------------------------
# Video store: video.json + frame_%06d.pgm


def save_video(directory, video_id: str, frames, fps: float = 30.0):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if not frames:
        raise StoreError("refusing to save an empty video")
    meta = {
        "video_id": video_id,
        "width": frames[0].width,
        "height": frames[0].height,
        "frame_count": len(frames),
        "fps": fps,
    }
    (directory / "video.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
    for t, frame in enumerate(frames):
        write_pgm(directory / f"frame_{t:06d}.pgm", frame.pixels)


def load_video(directory) -> tuple[dict, list]:
    directory = Path(directory)
    manifest = directory / "video.json"
    if not manifest.is_file():
        raise StoreError(f"missing video manifest: {manifest}")
    meta = json.loads(manifest.read_text(encoding="utf-8"))
    for key in ("video_id", "width", "height", "frame_count", "fps"):
        if key not in meta:
            raise StoreError(f"video manifest missing {key!r}: {manifest}")
    frames = []
    for t in range(int(meta["frame_count"])):
        px = read_pgm(directory / f"frame_{t:06d}.pgm")
        if px.shape != (meta["height"], meta["width"]):
            raise StoreError(f"frame {t} size disagrees with manifest in {directory}")
        frames.append(Frame(px))
    return meta, frames


# ---------------------------------------------------------------------------
# Trace store: CSV with one row per frame per subject

_TRACE_HEADER = ["video_id", "subject_id", "frame", "lon_deg", "lat_deg"]


def save_traces(path, traces):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(_TRACE_HEADER)
        for trace in traces:
            for t, p in enumerate(trace.positions):
                writer.writerow([trace.video_id, trace.subject_id, t, repr(p.lon), repr(p.lat)])


def load_traces(path) -> list:
    path = Path(path)
    if not path.is_file():
        raise StoreError(f"missing trace file: {path}")
    rows = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != _TRACE_HEADER:
            raise StoreError(f"bad trace header in {path}: {header}")
        for line in reader:
            if len(line) != 5:
                raise StoreError(f"bad trace row in {path}: {line}")
            vid, sid, frame, lon, lat = line
            rows.setdefault((vid, sid), []).append((int(frame), float(lon), float(lat)))
    traces = []
    for (vid, sid), entries in rows.items():
        entries.sort()
        if [e[0] for e in entries] != list(range(len(entries))):
            raise StoreError(f"non-contiguous frames for {vid}/{sid} in {path}")
        traces.append(
            HMTrace(vid, sid, [GeoPos(lon, lat) for _, lon, lat in entries])
        )
    traces.sort(key=lambda tr: (tr.video_id, tr.subject_id))
    return traces


# ---------------------------------------------------------------------------
# Heat-map store: map_%06d.f32 (little-endian float32, row-major) + sidecar


def save_hm_maps(directory, maps):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for t, m in enumerate(maps):
        (directory / f"map_{t:06d}.f32").write_bytes(
            m.values.astype("<f4").tobytes(order="C")
        )
        (directory / f"map_{t:06d}.json").write_text(
            json.dumps({"width": m.width, "height": m.height}), encoding="utf-8"
        )


def load_hm_map(path) -> HMMap:
    path = Path(path)
    sidecar = path.with_suffix(".json")
    if not sidecar.is_file():
        raise StoreError(f"missing map sidecar: {sidecar}")
    dims = json.loads(sidecar.read_text(encoding="utf-8"))
    w, h = int(dims["width"]), int(dims["height"])
    raw = path.read_bytes()
    if len(raw) != 4 * w * h:
        raise StoreError(f"map payload size mismatch: {path}")
    values = np.frombuffer(raw, dtype="<f4").reshape(h, w).astype(np.float64)
    return HMMap(values)


def load_hm_maps(directory) -> list:
    directory = Path(directory)
    paths = sorted(directory.glob("map_*.f32"))
    if not paths:
        raise StoreError(f"no map files under {directory}")
    return [load_hm_map(p) for p in paths]


def map_to_pgm(m: HMMap) -> np.ndarray:
    peak = m.values.max()
    scale = 255.0 / peak if peak > 0 else 0.0
    return np.round(m.values * scale).astype(np.uint8)
