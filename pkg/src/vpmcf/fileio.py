"""Plain-text persistence: field arrays, trajectories, CSV tables and run configs.

Array files hold a header line ``nx ny lx ly`` followed by row-major arrays
of ``nx * ny`` decimal literals (one grid row of ``ny`` values per line).
Reference files carry three arrays (v, lam1, lam2); snapshot files carry a
second header line ``t area volume h`` and a single array. Lines starting
with ``#`` are comments. Floats are written with ``repr`` so every value
parses back to the same double.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidDataError, MissingArtifactError
from .flow import HistoryRecord
from .foliation import ReferenceSurfaceData


@dataclass(frozen=True, eq=False)
class SurfaceSnapshot:
    nx: int
    ny: int
    lx: float
    ly: float
    t: float
    area: float
    volume: float
    h: float
    u: np.ndarray


def _fmt(x) -> str:
    return repr(float(x))


def _array_lines(a: np.ndarray) -> list[str]:
    return [" ".join(_fmt(x) for x in row) for row in a]


def _write_atomic(path, text: str):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _tokens(path) -> list[str]:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"{path}: no such file")
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0]
            out.extend(line.split())
    return out


def _header(tokens, path):
    if len(tokens) < 4:
        raise InvalidDataError(f"{path}: truncated header")
    try:
        nx, ny = int(tokens[0]), int(tokens[1])
        lx, ly = float(tokens[2]), float(tokens[3])
    except ValueError as exc:
        raise InvalidDataError(f"{path}: malformed header ({exc})") from None
    if nx < 1 or ny < 1:
        raise InvalidDataError(f"{path}: grid sizes must be positive")
    return nx, ny, lx, ly


def _floats(tokens, count, path):
    if len(tokens) != count:
        raise InvalidDataError(f"{path}: expected {count} values, found {len(tokens)}")
    try:
        return np.array([float(t) for t in tokens])
    except ValueError as exc:
        raise InvalidDataError(f"{path}: {exc}") from None


def write_reference(path, data: ReferenceSurfaceData):
    lines = ["# reference surface: header nx ny lx ly, then v, lam1, lam2",
             f"{data.nx} {data.ny} {_fmt(data.lx)} {_fmt(data.ly)}"]
    for name in ("v", "lam1", "lam2"):
        lines.append(f"# {name}")
        lines.extend(_array_lines(getattr(data, name)))
    _write_atomic(path, "\n".join(lines) + "\n")


def read_reference(path) -> ReferenceSurfaceData:
    tokens = _tokens(path)
    nx, ny, lx, ly = _header(tokens, path)
    n = nx * ny
    values = _floats(tokens[4:], 3 * n, path).reshape(3, nx, ny)
    return ReferenceSurfaceData(nx, ny, lx, ly, values[0], values[1], values[2])


def write_snapshot(path, data: ReferenceSurfaceData, u, t=0.0, area=0.0, volume=0.0, h=0.0, comment: str = ""):
    u = np.asarray(u, dtype=float)
    if u.shape != (data.nx, data.ny):
        raise ValueError(f"field has shape {u.shape}, expected {(data.nx, data.ny)}")
    lines = [f"# {comment}"] if comment else []
    lines.append(f"{data.nx} {data.ny} {_fmt(data.lx)} {_fmt(data.ly)}")
    lines.append(" ".join(_fmt(x) for x in (t, area, volume, h)))
    lines.extend(_array_lines(u))
    _write_atomic(path, "\n".join(lines) + "\n")


def write_surface(path, surface, t: float = 0.0, h: float | None = None, comment: str = ""):
    """Snapshot of a GraphSurface; h defaults to its average mean curvature."""
    if h is None:
        h = surface.integrate(surface.hmean) / surface.area
    write_snapshot(path, surface.data, surface.u, t, surface.area, surface.volume, h, comment)


def read_snapshot(path) -> SurfaceSnapshot:
    tokens = _tokens(path)
    nx, ny, lx, ly = _header(tokens, path)
    scalars = _floats(tokens[4:8], 4, path)
    u = _floats(tokens[8:], nx * ny, path).reshape(nx, ny)
    return SurfaceSnapshot(nx, ny, lx, ly, *map(float, scalars), u)


# trajectories

_RECORD_FIELDS = [f.name for f in fields(HistoryRecord)]


def record_line(rec: HistoryRecord) -> str:
    return json.dumps(rec.as_dict())


def append_records(path, records: Iterable[HistoryRecord]):
    with open(path, "a") as fh:
        for rec in records:
            fh.write(record_line(rec) + "\n")


def write_records(path, records: Iterable[HistoryRecord]):
    _write_atomic(path, "".join(record_line(r) + "\n" for r in records))


def read_records(path) -> list[HistoryRecord]:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"{path}: no such file")
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                out.append(HistoryRecord(**{k: float(obj[k]) for k in _RECORD_FIELDS}))
            except (ValueError, KeyError, TypeError) as exc:
                raise InvalidDataError(f"{path}:{lineno}: bad trajectory record ({exc})") from None
    return out


# tables


def format_cell(x) -> str:
    if isinstance(x, (float, np.floating)):
        return "%.17g" % x
    if x is None:
        return ""
    return str(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]):
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_cell(x) for x in row])
    os.replace(tmp, path)


def read_csv(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"{path}: no such file")
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path, obj):
    _write_atomic(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"{path}: no such file")
    with open(path) as fh:
        return json.load(fh)


# key = value configs


def parse_config(path) -> dict[str, str]:
    """Read ``key = value`` lines; keys are normalized to CLI flag spelling (dashes)."""
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"{path}: no such config file")
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidDataError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if not key:
                raise InvalidDataError(f"{path}:{lineno}: empty key")
            out[key.replace("_", "-")] = value
    return out


def canonical_config(values: Mapping[str, object]) -> str:
    """Sorted ``key = value`` text; floats use repr so the echo reproduces the run."""
    lines = []
    for key in sorted(values):
        value = values[key]
        if value is None:
            continue
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def write_config(path, values: Mapping[str, object]):
    _write_atomic(path, canonical_config(values))
