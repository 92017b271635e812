"""Mesh field file I/O.

Binary format (.stnf): a 32-byte little-endian header followed by the
raw cell values as IEEE-754 binary32, in storage order (last mesh
dimension outermost, x fastest, components innermost).

    offset  size  field
    0       4     magic "STNF"
    4       4     version (currently 1)
    8       4     ndim (2 or 3)
    12      4     m
    16      4     n
    20      4     l (1 for 2D meshes)
    24      4     arity
    28      4     reserved (0)

Text format (.txt): a header line "ndim m n [l] arity" followed by
whitespace-separated values in the same storage order.  Meant for small
hand-written cases only; the leading ndim keeps the header unambiguous.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .core import FieldData, MeshGeometry

__all__ = [
    "read_stnf",
    "write_stnf",
    "read_text",
    "write_text",
    "load_field",
    "save_field",
]

MAGIC = b"STNF"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIIII")


def write_stnf(path: str | Path, field: FieldData) -> None:
    g = field.geometry
    l = g.l if g.ndim == 3 else 1
    header = _HEADER.pack(MAGIC, VERSION, g.ndim, g.m, g.n, l, g.arity, 0)
    payload = field.values.astype("<f4", copy=False).tobytes()
    Path(path).write_bytes(header + payload)


def read_stnf(path: str | Path) -> FieldData:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, ndim, m, n, l, arity, _ = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a mesh field file (bad magic {magic!r})")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    if ndim == 2:
        geo = MeshGeometry((m, n), arity=arity)
    elif ndim == 3:
        geo = MeshGeometry((m, n, l), arity=arity)
    else:
        raise ValueError(f"{path}: bad ndim {ndim}")
    want = geo.cells * arity * 4
    payload = raw[_HEADER.size :]
    if len(payload) != want:
        raise ValueError(
            f"{path}: payload holds {len(payload)} bytes, header implies {want}"
        )
    values = np.frombuffer(payload, dtype="<f4").astype(np.float32)
    return FieldData(geo, values)


def write_text(path: str | Path, field: FieldData) -> None:
    g = field.geometry
    dims = " ".join(str(e) for e in g.dims)
    lines = [f"{g.ndim} {dims} {g.arity}"]
    # 9 significant digits round-trips binary32 exactly
    lines.extend(f"{v:.9g}" for v in field.values)
    Path(path).write_text("\n".join(lines) + "\n")


def read_text(path: str | Path) -> FieldData:
    tokens = Path(path).read_text().split()
    if not tokens:
        raise ValueError(f"{path}: empty mesh file")
    try:
        ndim = int(tokens[0])
    except ValueError:
        raise ValueError(f"{path}: header must start with ndim") from None
    if ndim not in (2, 3):
        raise ValueError(f"{path}: bad ndim {ndim}")
    head_len = 2 + ndim  # ndim, dims..., arity
    if len(tokens) < head_len:
        raise ValueError(f"{path}: truncated header")
    try:
        ints = [int(t) for t in tokens[1:head_len]]
    except ValueError as e:
        raise ValueError(f"{path}: bad header field: {e}") from None
    geo = MeshGeometry(tuple(ints[:-1]), arity=ints[-1])
    if len(tokens) - head_len != geo.cells * geo.arity:
        raise ValueError(
            f"{path}: {len(tokens) - head_len} values, header implies "
            f"{geo.cells * geo.arity}"
        )
    values = np.array([float(t) for t in tokens[head_len:]], dtype=np.float32)
    return FieldData(geo, values)


def load_field(path: str | Path) -> FieldData:
    p = Path(path)
    if p.suffix == ".stnf":
        return read_stnf(p)
    if p.suffix in (".txt", ".text"):
        return read_text(p)
    raise ValueError(f"{path}: unknown mesh file extension {p.suffix!r}")


def save_field(path: str | Path, field: FieldData) -> None:
    p = Path(path)
    if p.suffix == ".stnf":
        write_stnf(p, field)
    elif p.suffix in (".txt", ".text"):
        write_text(p, field)
    else:
        raise ValueError(f"{path}: unknown mesh file extension {p.suffix!r}")
