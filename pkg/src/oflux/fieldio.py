"""Shared binary field format and JSON sidecars.

Layout (little-endian):
  magic "OFLX1" | u32 axis count | per axis: u64 dims, f64 spacing, u8 kind
  | u32 component count | f64 time | payload: components in C-order, f64.

Axis kind: 0 = periodic, 1 = wall.  Velocity components come first; an
optional trailing component holds the pressure, as declared by the sidecar.
The sidecar ``<file>.json`` carries tags (divergence-free, impermeable,
generator provenance, seed) and is written canonically (sorted keys) so
that reruns are byte-identical.

A trajectory is a directory of snapshot files plus ``trajectory.json``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import PreconditionError
from .grids import PERIODIC, WALL, Grid, Snapshot, Trajectory

MAGIC = b"OFLX1"
_KIND_CODE = {PERIODIC: 0, WALL: 1}
_CODE_KIND = {0: PERIODIC, 1: WALL}


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _sanitize(obj):
    """Make tags JSON-serializable (numpy scalars to python scalars)."""
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def write_snapshot(path: str | Path, snap: Snapshot) -> Path:
    path = Path(path)
    grid = snap.grid
    parts = [MAGIC, struct.pack("<I", grid.ndim)]
    for a in range(grid.ndim):
        parts.append(
            struct.pack("<Qd B", grid.dims[a], grid.spacing[a], _KIND_CODE[grid.axis_kinds[a]])
        )
    ncomp = grid.ndim + (1 if snap.pressure is not None else 0)
    parts.append(struct.pack("<I", ncomp))
    parts.append(struct.pack("<d", float(snap.time)))
    payload = [np.ascontiguousarray(snap.velocity[c], dtype="<f8").tobytes() for c in range(grid.ndim)]
    if snap.pressure is not None:
        payload.append(np.ascontiguousarray(snap.pressure, dtype="<f8").tobytes())
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(b"".join(parts) + b"".join(payload))
    sidecar = {
        "fields": [f"u{c}" for c in range(grid.ndim)] + (["p"] if snap.pressure is not None else []),
        "has_pressure": snap.pressure is not None,
        "tags": _sanitize(snap.tags),
    }
    Path(str(path) + ".json").write_text(canonical_json(sidecar), encoding="utf-8")
    return path


def read_snapshot(path: str | Path) -> Snapshot:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:5] != MAGIC:
        raise PreconditionError(f"{path}: not an OFLX1 field file")
    off = 5
    (naxes,) = struct.unpack_from("<I", raw, off)
    off += 4
    dims, spacing, kinds = [], [], []
    for _ in range(naxes):
        m, h, kind = struct.unpack_from("<Qd B", raw, off)
        off += struct.calcsize("<Qd B")
        dims.append(int(m))
        spacing.append(float(h))
        kinds.append(_CODE_KIND[kind])
    (ncomp,) = struct.unpack_from("<I", raw, off)
    off += 4
    (time,) = struct.unpack_from("<d", raw, off)
    off += 8
    extents = [
        m * h if kind == PERIODIC else (m - 1) * h for m, h, kind in zip(dims, spacing, kinds)
    ]
    grid = Grid(tuple(dims), tuple(extents), tuple(kinds))
    count = int(np.prod(dims))
    comps = []
    for c in range(ncomp):
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(dims).copy()
        off += count * 8
        comps.append(arr)
    sidecar_path = Path(str(path) + ".json")
    tags = {}
    has_pressure = ncomp == naxes + 1
    if sidecar_path.exists():
        sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
        tags = sidecar.get("tags", {})
        has_pressure = sidecar.get("has_pressure", has_pressure)
    if has_pressure:
        if ncomp != naxes + 1:
            raise PreconditionError(f"{path}: component count inconsistent with pressure flag")
        velocity, pressure = np.stack(comps[:-1]), comps[-1]
    else:
        if ncomp != naxes:
            raise PreconditionError(f"{path}: component count does not match axis count")
        velocity, pressure = np.stack(comps), None
    return Snapshot(grid, velocity, pressure, time, tags)


def write_scalar_field(path: str | Path, grid: Grid, values: np.ndarray, time: float = 0.0,
                       name: str = "scalar", tags: dict | None = None) -> Path:
    """Write a single-component field (e.g. a dissipation defect) in the
    shared format; the sidecar names the component."""
    path = Path(path)
    values = np.asarray(values, dtype=float)
    if values.shape != grid.dims:
        raise PreconditionError("scalar field shape does not match the grid")
    parts = [MAGIC, struct.pack("<I", grid.ndim)]
    for a in range(grid.ndim):
        parts.append(
            struct.pack("<Qd B", grid.dims[a], grid.spacing[a], _KIND_CODE[grid.axis_kinds[a]])
        )
    parts.append(struct.pack("<I", 1))
    parts.append(struct.pack("<d", float(time)))
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(b"".join(parts) + np.ascontiguousarray(values, dtype="<f8").tobytes())
    sidecar = {"fields": [name], "has_pressure": False, "tags": _sanitize(tags or {})}
    Path(str(path) + ".json").write_text(canonical_json(sidecar), encoding="utf-8")
    return path


def read_scalar_field(path: str | Path):
    """Read a single-component field; returns (grid, values, time, tags)."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:5] != MAGIC:
        raise PreconditionError(f"{path}: not an OFLX1 field file")
    off = 5
    (naxes,) = struct.unpack_from("<I", raw, off)
    off += 4
    dims, spacing, kinds = [], [], []
    for _ in range(naxes):
        m, h, kind = struct.unpack_from("<Qd B", raw, off)
        off += struct.calcsize("<Qd B")
        dims.append(int(m))
        spacing.append(float(h))
        kinds.append(_CODE_KIND[kind])
    (ncomp,) = struct.unpack_from("<I", raw, off)
    off += 4
    if ncomp != 1:
        raise PreconditionError(f"{path}: expected a single-component field, got {ncomp}")
    (time,) = struct.unpack_from("<d", raw, off)
    off += 8
    extents = [m * h if k == PERIODIC else (m - 1) * h for m, h, k in zip(dims, spacing, kinds)]
    grid = Grid(tuple(dims), tuple(extents), tuple(kinds))
    count = int(np.prod(dims))
    values = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(dims).copy()
    tags = {}
    sidecar_path = Path(str(path) + ".json")
    if sidecar_path.exists():
        tags = json.loads(sidecar_path.read_text(encoding="utf-8")).get("tags", {})
    return grid, values, time, tags


def write_trajectory(directory: str | Path, traj: Trajectory, tags: dict | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for i, snap in enumerate(traj.snapshots):
        name = f"snap_{i:05d}.oflx"
        write_snapshot(directory / name, snap)
        files.append(name)
    meta = {
        "dt": traj.dt,
        "times": [float(s.time) for s in traj.snapshots],
        "files": files,
        "tags": _sanitize(tags or {}),
    }
    (directory / "trajectory.json").write_text(canonical_json(meta), encoding="utf-8")
    return directory


def read_trajectory(directory: str | Path) -> Trajectory:
    directory = Path(directory)
    meta_path = directory / "trajectory.json"
    if not meta_path.exists():
        raise PreconditionError(f"{directory}: no trajectory.json found")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    snaps = tuple(read_snapshot(directory / name) for name in meta["files"])
    return Trajectory(snaps, float(meta["dt"]))


def load_input(path: str | Path):
    """Read either a single snapshot file or a trajectory directory."""
    path = Path(path)
    if path.is_dir():
        return read_trajectory(path)
    return read_snapshot(path)
