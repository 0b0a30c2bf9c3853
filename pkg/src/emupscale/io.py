"""
File formats shared by the command-line tools.

Conductivity models
    JSON ``{"format": "emupscale-model", "components": 1 | 6, "values": [...]}``
    with values ordered by cell index (x fastest); tensors are stored as
    ``(sigma_xx, sigma_yy, sigma_zz, sigma_xy, sigma_xz, sigma_yz)`` per cell.
    The flat binary variant (``.bin``) is a 16-byte header followed by
    little-endian float64 payload::

        magic   4 bytes  b"EMUP"
        version uint32   1
        cells   uint32
        comps   uint32   1 or 6

Everything else is JSON (configs, surveys, meshes) or CSV (tables).
"""
from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .mesh import mesh_from_json, mesh_to_json

__all__ = [
    "read_model",
    "write_model",
    "read_json",
    "write_json",
    "write_table",
    "read_mesh",
    "write_mesh",
]

_MAGIC = b"EMUP"
_VERSION = 1
_HEADER = struct.Struct("<4sIII")


def _as_2d(values):
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        return v[:, None]
    if v.ndim == 2 and v.shape[1] in (1, 6):
        return v
    raise ValueError(f"model values must be (n,) or (n, 6), got shape {v.shape}")


def write_model(path, values):
    """Write per-cell conductivities (``(n,)`` or ``(n, 6)``)."""
    path = Path(path)
    v = _as_2d(values)
    if path.suffix == ".bin":
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(_MAGIC, _VERSION, v.shape[0], v.shape[1]))
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())
    else:
        doc = {"format": "emupscale-model", "components": int(v.shape[1]), "values": v.ravel().tolist()}
        path.write_text(json.dumps(doc))


def read_model(path):
    """Read a model written by :func:`write_model`; returns ``(n,)`` or ``(n, 6)``."""
    path = Path(path)
    if path.suffix == ".bin":
        raw = path.read_bytes()
        if len(raw) < _HEADER.size:
            raise ValueError(f"{path}: truncated model header")
        magic, version, n, c = _HEADER.unpack_from(raw)
        if magic != _MAGIC or version != _VERSION:
            raise ValueError(f"{path}: not an emupscale model file (version {_VERSION})")
        payload = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
        if payload.size != n * c:
            raise ValueError(f"{path}: expected {n * c} values, found {payload.size}")
        v = payload.reshape(n, c).astype(float)
    else:
        doc = json.loads(path.read_text())
        if doc.get("format") != "emupscale-model":
            raise ValueError(f"{path}: missing 'format': 'emupscale-model'")
        c = int(doc["components"])
        if c not in (1, 6):
            raise ValueError(f"{path}: components must be 1 or 6, got {c}")
        v = np.asarray(doc["values"], dtype=float)
        if v.size % c:
            raise ValueError(f"{path}: {v.size} values is not a multiple of {c}")
        v = v.reshape(-1, c)
    return v[:, 0].copy() if v.shape[1] == 1 else v


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise ValueError(f"{path}: invalid JSON ({err})") from None


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_mesh(path):
    return mesh_from_json(Path(path).read_text())


def write_mesh(path, mesh):
    Path(path).write_text(mesh_to_json(mesh) + "\n")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path, columns, rows):
    """CSV with a fixed column order; ``rows`` are dicts keyed by column."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
