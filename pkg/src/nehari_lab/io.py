"""Field files (CSV and binary raster) and the CSV/JSON writers used by the CLI.

Field CSV: a two-line header holding the grid (``dim,n,L,s`` then the
values), a ``value`` column title, then one value per line in C order.

Binary raster: a 64-byte little-endian header (magic ``NEHFLD01``, int64
dim, int64 n, float64 L, float64 s, zero padding) followed by the values as
float64 little-endian in C order.
"""
from __future__ import annotations

import csv
import json
import math
import struct
from pathlib import Path

import numpy as np

from .exceptions import ConfigError
from .fields import FieldPair, GridSpec

MAGIC = b"NEHFLD01"
HEADER = struct.Struct("<8sqqdd24x")
assert HEADER.size == 64

GRID_COLUMNS = ("dim", "n", "L", "s")


def write_field_csv(path, f: np.ndarray, grid: GridSpec) -> None:
    _check_shape(f, grid)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(GRID_COLUMNS)
        w.writerow([grid.dim, grid.points_per_dim, repr(grid.half_width), repr(grid.s)])
        w.writerow(["value"])
        for x in np.asarray(f, dtype=float).ravel():
            w.writerow([repr(float(x))])


def read_field_csv(path) -> tuple[np.ndarray, GridSpec]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 3 or tuple(rows[0]) != GRID_COLUMNS or rows[2] != ["value"]:
        raise ConfigError(f"{path}: not a field CSV (expected header {','.join(GRID_COLUMNS)})")
    dim, n, L, s = rows[1]
    grid = GridSpec(dim=int(dim), half_width=float(L), points_per_dim=int(n), s=float(s))
    values = np.array([float(r[0]) for r in rows[3:]])
    if values.size != math.prod(grid.shape):
        raise ConfigError(f"{path}: {values.size} values for a grid of {math.prod(grid.shape)} points")
    return values.reshape(grid.shape), grid


def write_field_binary(path, f: np.ndarray, grid: GridSpec) -> None:
    _check_shape(f, grid)
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, grid.dim, grid.points_per_dim, grid.half_width, grid.s))
        fh.write(np.ascontiguousarray(f, dtype="<f8").tobytes())


def read_field_binary(path) -> tuple[np.ndarray, GridSpec]:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise ConfigError(f"{path}: truncated header")
    magic, dim, n, L, s = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ConfigError(f"{path}: bad magic {magic!r}")
    grid = GridSpec(dim=dim, half_width=L, points_per_dim=n, s=s)
    values = np.frombuffer(raw, dtype="<f8", offset=HEADER.size)
    if values.size != math.prod(grid.shape):
        raise ConfigError(f"{path}: {values.size} values for a grid of {math.prod(grid.shape)} points")
    return values.astype(float).reshape(grid.shape), grid


def read_field(path) -> tuple[np.ndarray, GridSpec]:
    """Dispatch on the file content: binary if it starts with the magic."""
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
    return read_field_binary(path) if head == MAGIC else read_field_csv(path)


def write_pair(out_dir, pair: FieldPair, stem: str) -> list[Path]:
    """Write both fields of ``pair`` as CSV and binary; returns the paths."""
    out_dir = Path(out_dir)
    paths = []
    for name, f in (("u", pair.u), ("v", pair.v)):
        p_csv = out_dir / f"{stem}_{name}.csv"
        p_bin = out_dir / f"{stem}_{name}.bin"
        write_field_csv(p_csv, f, pair.grid)
        write_field_binary(p_bin, f, pair.grid)
        paths += [p_csv, p_bin]
    return paths


def _check_shape(f, grid):
    if np.shape(f) != grid.shape:
        raise ConfigError(f"field shape {np.shape(f)} does not match grid {grid.shape}")


def write_csv(path, columns, rows) -> None:
    """RFC-4180 style table; floats use ``repr`` so output is exact and stable."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(x) for x in row])


def _cell(x):
    if isinstance(x, bool) or x is None:
        return "" if x is None else str(x).lower()
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj) + "\n", encoding="utf-8")


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, ensure_ascii=False)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x
