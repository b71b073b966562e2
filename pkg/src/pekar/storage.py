"""On-disk formats: grid binaries for states and sampled fields, JSON and CSV
artifacts written atomically.

Grid binary layout: an ASCII header terminated by a line ``end``, then
little-endian float64 values row-major over ``(z, y, x, component)``::

    pekar-grid 1
    shape NX NY NZ
    spacing HX HY HZ
    origin OX OY OZ
    box LX LY LZ
    components C
    end
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .fields import FieldSpec
from .functional import HartreeState
from .grid import Grid3D

MAGIC = "pekar-grid 1"


def _atomic_write(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_grid(path, grid: Grid3D, data: np.ndarray) -> None:
    """``data`` has shape ``(C, nx, ny, nz)``."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 4 or data.shape[1:] != grid.shape:
        raise ValueError("data must have shape (components, nx, ny, nz)")
    head = "\n".join([
        MAGIC,
        "shape " + " ".join(str(v) for v in grid.n),
        "spacing " + " ".join(repr(float(v)) for v in grid.spacing),
        "origin " + " ".join(repr(v) for v in grid.origin),
        "box " + " ".join(repr(v) for v in grid.box_length),
        f"components {data.shape[0]}",
        "end",
    ]) + "\n"
    body = np.ascontiguousarray(np.transpose(data, (3, 2, 1, 0)), dtype="<f8").tobytes()
    _atomic_write(path, head.encode("ascii") + body)


def read_grid(path) -> tuple[Grid3D, np.ndarray]:
    raw = Path(path).read_bytes()
    meta = {}
    pos = 0
    first = True
    while True:
        nl = raw.find(b"\n", pos)
        if nl < 0:
            raise ValueError(f"{path}: truncated header")
        line = raw[pos:nl].decode("ascii").strip()
        pos = nl + 1
        if first:
            if line != MAGIC:
                raise ValueError(f"{path}: not a grid file")
            first = False
            continue
        if line == "end":
            break
        key, *vals = line.split()
        meta[key] = vals
    try:
        n = tuple(int(v) for v in meta["shape"])
        h = [float(v) for v in meta["spacing"]]
        origin = tuple(float(v) for v in meta["origin"])
        comps = int(meta["components"][0])
    except (KeyError, ValueError, IndexError) as exc:
        raise ValueError(f"{path}: bad header ({exc})") from None
    box = tuple(float(v) for v in meta["box"]) if "box" in meta else tuple(m * s for m, s in zip(n, h))
    grid = Grid3D(n, box, origin)
    count = comps * grid.size
    arr = np.frombuffer(raw, dtype="<f8", offset=pos)
    if arr.size != count:
        raise ValueError(f"{path}: expected {count} values, found {arr.size}")
    data = np.transpose(arr.reshape(n[2], n[1], n[0], comps), (3, 2, 1, 0)).astype(float)
    return grid, data


def write_state(path, state: HartreeState) -> None:
    """Orbital ``j`` occupies components ``2j`` (real part) and ``2j+1`` (imaginary part)."""
    comps = np.empty((2 * state.N, *state.grid.shape))
    comps[0::2] = state.orbitals.real
    comps[1::2] = state.orbitals.imag
    write_grid(path, state.grid, comps)


def read_state(path) -> HartreeState:
    grid, data = read_grid(path)
    if data.shape[0] % 2:
        raise ValueError(f"{path}: state files need an even number of components")
    return HartreeState(grid, data[0::2] + 1j * data[1::2])


def write_field(path, spec: FieldSpec) -> None:
    """Components ``Ax, Ay, Az, V``."""
    if spec.kind != "sampled":
        raise ValueError("only sampled fields are stored as grids")
    s = spec.sampled
    write_grid(path, s.grid, np.concatenate([s.A, s.V[None]]))


def read_field(path, gauge_note: str = "") -> FieldSpec:
    grid, data = read_grid(path)
    if data.shape[0] != 4:
        raise ValueError(f"{path}: field files need 4 components (Ax, Ay, Az, V)")
    return FieldSpec.from_samples(grid, data[:3], data[3], gauge_note)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps_json(obj) -> str:
    """Canonical JSON: sorted keys, non-finite floats as ``null``."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def write_json(path, obj) -> None:
    _atomic_write(path, dumps_json(obj).encode())


def read_json(path):
    return json.loads(Path(path).read_text())


def dumps_csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def write_csv(path, header: list[str], rows: list[list]) -> None:
    _atomic_write(path, dumps_csv(header, rows).encode())


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def config_hash(config: dict) -> str:
    """Short sha256 of the canonical JSON form."""
    return hashlib.sha256(json.dumps(_clean(config), sort_keys=True).encode()).hexdigest()[:12]
