"""Binary field snapshots.

Layout (all little-endian): magic ``QINS``, u32 format version, u8 mode
(0 = torus, 1 = rect), u32 N1, u32 N2, f64 L1, f64 L2, then row-major f64
payloads for the fields c, v1, v2.
"""

import struct

import numpy as np

from .fields import Grid, RECT, ScalarField, TORUS, VectorField
from .model import MaterialState

MAGIC = b"QINS"
VERSION = 1
_HEADER = struct.Struct("<4sIBIIdd")


def write_snapshot(path, state: MaterialState):
    g = state.grid
    mode = 0 if g.mode == TORUS else 1
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, mode, g.shape[0], g.shape[1],
                              g.lengths[0], g.lengths[1]))
        for arr in (state.c.values, state.v.v1, state.v.v2):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_snapshot(path) -> MaterialState:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        magic, version, mode, n1, n2, l1, l2 = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ValueError(f"not a QINS snapshot: bad magic {magic!r}")
        if version != VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        grid = Grid(TORUS if mode == 0 else RECT, (l1, l2), (n1, n2))
        count = n1 * n2
        fields = []
        for _ in range(3):
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise ValueError("truncated snapshot payload")
            fields.append(np.frombuffer(buf, dtype="<f8").reshape(n1, n2).copy())
    c, v1, v2 = fields
    return MaterialState(VectorField(grid, v1, v2), ScalarField(grid, c))
