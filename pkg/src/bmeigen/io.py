"""Report and grid serialisation.

Reports are JSON with sorted keys and CSV tables.  Grid dumps are a raw
little-endian float64 block (C order, shape (nx, ny)), a raw uint8 mask
block and a JSON sidecar describing the lattice.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .geometry import Grid2D
from .grid import GridField


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and dataclasses; non-finite floats become None."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "to_dict"):
            return to_jsonable(obj.to_dict())
        return to_jsonable(dataclasses.asdict(obj))
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def dumps(payload) -> str:
    return json.dumps(to_jsonable(payload), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, payload) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(dumps(payload), encoding="utf-8")
    return p


def write_csv(path, rows: Iterable[Mapping], fieldnames=None) -> Path:
    rows = [to_jsonable(r) for r in rows]
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    if fieldnames is None:
        fieldnames = list(rows[0]) if rows else []
    with p.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in fieldnames})
    return p


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def dump_grid(values: np.ndarray, grid: Grid2D, stem, role: str = "u", csv_table: bool = True) -> dict:
    """Write <stem>.f64, <stem>.mask.u8, <stem>.json and optionally <stem>.csv (x, y, value on the mask)."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    vals = np.ascontiguousarray(values, dtype="<f8")
    if vals.shape != grid.shape:
        raise ValueError(f"values have shape {vals.shape}, grid has {grid.shape}")
    raw = stem.parent / (stem.name + ".f64")
    mask = stem.parent / (stem.name + ".mask.u8")
    raw.write_bytes(vals.tobytes(order="C"))
    mask.write_bytes(np.ascontiguousarray(grid.mask, dtype=np.uint8).tobytes(order="C"))
    meta = {
        "role": role,
        "origin": [float(grid.origin[0]), float(grid.origin[1])],
        "h": float(grid.h),
        "shape": [int(grid.nx), int(grid.ny)],
        "dtype": "<f8",
        "order": "C",
        "layout": "values[i, j] at (origin_x + i*h, origin_y + j*h)",
        "data": raw.name,
        "mask": mask.name,
        "sha256": hashlib.sha256(vals.tobytes(order="C")).hexdigest(),
    }
    write_json(stem.parent / (stem.name + ".json"), meta)
    if csv_table:
        P = grid.points()[grid.mask]
        rows = [{"x": float(x), "y": float(y), "value": float(v)}
                for (x, y), v in zip(P, vals[grid.mask])]
        write_csv(stem.parent / (stem.name + ".csv"), rows, ["x", "y", "value"])
    return meta


def dump_field(f: GridField, stem, csv_table: bool = True) -> dict:
    return dump_grid(f.values, f.grid, stem, f.role, csv_table)


def read_grid(sidecar) -> tuple[np.ndarray, Grid2D, dict]:
    """Inverse of :func:`dump_grid`: (values, grid, sidecar metadata).

    The sidecar path may be given with or without ``.json``.
    """
    side = Path(sidecar)
    if side.suffix != ".json":
        side = side.parent / (side.name + ".json")
    meta = json.loads(side.read_text(encoding="utf-8"))
    nx, ny = meta["shape"]
    vals = np.frombuffer((side.parent / meta["data"]).read_bytes(), dtype="<f8").reshape(nx, ny).copy()
    if hashlib.sha256(vals.tobytes(order="C")).hexdigest() != meta.get("sha256", ""):
        raise ValueError(f"{side}: data block does not match the recorded checksum")
    mask = np.frombuffer((side.parent / meta["mask"]).read_bytes(), dtype=np.uint8).reshape(nx, ny).astype(bool)
    grid = Grid2D(tuple(meta["origin"]), float(meta["h"]), nx, ny, mask)
    return vals, grid, meta


def load_grid(sidecar) -> GridField:
    vals, grid, meta = read_grid(sidecar)
    return GridField(grid, vals, meta.get("role", "u"))
