"""
Binary field files and the small text formats written next to them.

BGS1 layout (all little-endian)::

    b"BGS1" | u32 dim | u32 points[dim] | f64 half_length[dim] | f64 alpha | f64 samples (row-major)
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .errors import FieldIOError, ParameterError
from .grid import Field, Grid

__all__ = ["MAGIC", "save_field", "load_field", "write_csv", "to_jsonable", "append_jsonl", "read_jsonl", "write_json"]

MAGIC = b"BGS1"


def save_field(path, u: Field, alpha: float) -> Path:
    path = Path(path)
    g = u.grid
    header = MAGIC + struct.pack(f"<I{g.dim}I{g.dim}dd", g.dim, *g.points, *g.half_length, float(alpha))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(u.values, dtype="<f8").tobytes(order="C"))
    except OSError as exc:
        raise FieldIOError(f"cannot write {path}: {exc}") from exc
    return path


def load_field(path) -> tuple[Field, float]:
    """Return (field, alpha) stored in a BGS1 file."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise FieldIOError(f"cannot read {path}: {exc}") from exc
    if data[:4] != MAGIC:
        raise FieldIOError(f"{path}: not a BGS1 file")
    try:
        (dim,) = struct.unpack_from("<I", data, 4)
        if dim not in (1, 2, 3):
            raise FieldIOError(f"{path}: invalid dimension {dim}")
        fmt = f"<{dim}I{dim}dd"
        fields = struct.unpack_from(fmt, data, 8)
    except struct.error as exc:
        raise FieldIOError(f"{path}: truncated header") from exc
    points, half, alpha = fields[:dim], fields[dim : 2 * dim], fields[-1]
    offset = 8 + struct.calcsize(fmt)
    try:
        grid = Grid(dim, tuple(half), tuple(points))
    except ParameterError as exc:
        raise FieldIOError(f"{path}: bad grid header ({exc})") from exc
    expected = grid.size * 8
    if len(data) - offset != expected:
        raise FieldIOError(f"{path}: expected {expected} bytes of samples, found {len(data) - offset}")
    values = np.frombuffer(data, dtype="<f8", offset=offset).reshape(grid.shape)
    try:
        return Field(grid, values.astype(float)), float(alpha)
    except ParameterError as exc:
        raise FieldIOError(f"{path}: {exc}") from exc


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def to_jsonable(obj):
    """Plain JSON types; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, record: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(record), indent=2, sort_keys=True) + "\n")
    return path


def append_jsonl(path, records) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a") as fh:
        for rec in records:
            fh.write(json.dumps(to_jsonable(rec), sort_keys=True) + "\n")
    return path


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
