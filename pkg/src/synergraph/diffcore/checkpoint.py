"""Binary checkpoint format.

Layout (all little-endian)::

    magic  b"SGCKPT\\0\\0"           8 bytes
    version                         u32
    step                            u64
    count                           u32
    count x { name_len u32, name utf-8, ndim u32, dims u64[ndim], f64[prod(dims)] }

Entries are written in sorted name order so identical parameters give
identical bytes.
"""
from __future__ import annotations

import struct

import numpy as np

MAGIC = b"SGCKPT\0\0"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(arrays, step=0):
    parts = [MAGIC, struct.pack("<IQI", VERSION, int(step), len(arrays))]
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def loads(buf):
    if buf[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file")
    version, step, count = struct.unpack_from("<IQI", buf, 8)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 8 + struct.calcsize("<IQI")
    arrays = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        name = buf[pos:pos + n].decode("utf-8")
        pos += n
        (ndim,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}Q", buf, pos)
        pos += 8 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(buf, dtype="<f8", count=size, offset=pos).reshape(shape)
        pos += 8 * size
        arrays[name] = arr.astype(np.float64)
    if pos != len(buf):
        raise CheckpointError("trailing bytes after last entry")
    return arrays, step


def save(path, store):
    with open(path, "wb") as fh:
        fh.write(dumps(store.arrays(), store.step))


def load(path, store=None):
    with open(path, "rb") as fh:
        arrays, step = loads(fh.read())
    if store is not None:
        store.load_arrays(arrays)
        store.step = step
    return arrays, step
