"""Snapshot and table files.

A snapshot is a CSV file with ``# key=value`` header lines followed by the
columns ``r,psi,psidot``.  Floats are written with 17 significant digits,
which round-trips IEEE doubles exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .exceptions import SnapshotFormatError
from .grid import FieldState, RadialGrid

__all__ = [
    "SNAPSHOT_KEYS",
    "fmt",
    "write_snapshot",
    "read_snapshot",
    "write_table",
    "write_json",
]

SNAPSHOT_KEYS = ("k", "ell", "m", "time", "R_max", "N", "grading")
COLUMNS = ("r", "psi", "psidot")


def fmt(x) -> str:
    return format(float(x), ".17g")


def write_snapshot(path, state: FieldState) -> Path:
    path = Path(path)
    g = state.grid
    meta = {"k": g.k, "ell": state.ell, "m": state.m, "time": fmt(state.time),
            "R_max": fmt(g.R_max), "N": g.N, "grading": g.describe()}
    lines = [f"# {key}={meta[key]}" for key in SNAPSHOT_KEYS]
    lines.append(",".join(COLUMNS))
    lines += [f"{fmt(r)},{fmt(p)},{fmt(v)}" for r, p, v in zip(g.r, state.psi, state.psidot)]
    path.write_text("\n".join(lines) + "\n")
    return path


def _parse_grading(text, key="grading"):
    if text == "uniform":
        return "uniform", None
    if text.startswith("geometric:"):
        try:
            return "geometric", float(text.split(":", 1)[1])
        except ValueError:
            pass
    raise SnapshotFormatError(f"unrecognised grading {text!r}", key=key)


def read_snapshot(path, grid: RadialGrid | None = None) -> FieldState:
    """Read a snapshot; reuses ``grid`` when its nodes match the file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SnapshotFormatError(f"cannot read {path}: {exc}") from exc
    meta, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition("=")
            if not sep:
                raise SnapshotFormatError(f"malformed header line {line!r}")
            meta[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    for key in SNAPSHOT_KEYS:
        if key not in meta:
            raise SnapshotFormatError(f"snapshot {path} lacks metadata key {key!r}", key=key)
    if not body or tuple(c.strip() for c in body[0].split(",")) != COLUMNS:
        raise SnapshotFormatError(f"snapshot {path} must have columns {','.join(COLUMNS)}",
                                  key="columns")
    try:
        data = np.array([[float(x) for x in row.split(",")] for row in body[1:]], dtype=float)
        k, ell, m, n = (int(meta[key]) for key in ("k", "ell", "m", "N"))
        t, R = float(meta["time"]), float(meta["R_max"])
    except ValueError as exc:
        raise SnapshotFormatError(f"snapshot {path}: {exc}") from exc
    if data.ndim != 2 or data.shape != (n, 3):
        raise SnapshotFormatError(f"snapshot {path}: expected {n} rows of 3 values", key="N")
    grading, ratio = _parse_grading(meta["grading"])
    r = data[:, 0]
    if r[-1] != R:
        raise SnapshotFormatError(f"last node {r[-1]!r} differs from R_max={R!r}", key="R_max")
    if grid is None or grid.k != k or not np.array_equal(grid.r, r):
        grid = RadialGrid(r, k=k, grading=grading, ratio=ratio)
    return FieldState(grid, data[:, 1], data[:, 2], ell=ell, m=m, time=t)


def write_table(path, header, rows) -> Path:
    """CSV with floats in round-trip format."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])
    return path


def write_json(path, payload) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"cannot serialise {type(x).__name__}")
