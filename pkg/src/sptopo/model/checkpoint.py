"""Binary parameter checkpoints.

Layout (little-endian): ``b"SPHN1"``, uint32 array count, then per array a
uint32 name length, the UTF-8 name, uint64 rows, uint64 cols and rows*cols
float64 values in row-major order. Arrays that are not 2-D are stored
flattened to (1, size) or (shape[0], rest) and reshaped on load when a
template is supplied.
"""
from __future__ import annotations

import struct

import numpy as np

from ..errors import DataError

MAGIC = b"SPHN1"


def save_params(params: dict[str, np.ndarray], path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(params)))
        for name, value in params.items():
            arr = np.asarray(value, dtype="<f8")
            mat = arr.reshape(1, -1) if arr.ndim < 2 else arr.reshape(arr.shape[0], -1)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<QQ", *mat.shape))
            fh.write(np.ascontiguousarray(mat).tobytes())


def load_params(path, template: dict[str, np.ndarray] | None = None) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(MAGIC):
        raise DataError(f"{path}: not a parameter checkpoint")
    pos = len(MAGIC)
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    out = {}
    for _ in range(count):
        (length,) = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos : pos + length].decode("utf-8")
        pos += length
        rows, cols = struct.unpack_from("<QQ", data, pos)
        pos += 16
        size = rows * cols * 8
        arr = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=pos).reshape(rows, cols).astype(np.float64)
        pos += size
        if template is not None and name in template:
            arr = arr.reshape(np.shape(template[name]))
        out[name] = arr
    if pos != len(data):
        raise DataError(f"{path}: trailing bytes after {count} arrays")
    return out
