"""EVN1 checkpoint files.

Layout (all integers little-endian)::

    b"EVN1"  u32 count
    count x ( u16 name_len, name utf-8, u8 rank, rank x u32 dim, float32 values )

Writes go to a temporary file that is renamed into place, so readers never
observe a partial checkpoint.
"""

from __future__ import annotations

import os
import struct
import tempfile
from collections import OrderedDict

import numpy as np

from evnat.errors import CheckpointFormatError

MAGIC = b"EVN1"


def encode_checkpoint(tensors) -> bytes:
    parts = [MAGIC, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_checkpoint(data: bytes) -> "OrderedDict[str, np.ndarray]":
    if data[:4] != MAGIC:
        raise CheckpointFormatError(f"bad magic {data[:4]!r}")
    try:
        (count,) = struct.unpack_from("<I", data, 4)
        pos = 8
        out = OrderedDict()
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos : pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<B", data, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", data, pos)
            pos += 4 * rank
            size = int(np.prod(dims, dtype=np.int64))
            if pos + 4 * size > len(data):
                raise CheckpointFormatError(f"tensor {name!r} runs past end of file")
            out[name] = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(dims).astype(np.float32)
            pos += 4 * size
    except struct.error as exc:
        raise CheckpointFormatError(str(exc)) from None
    if pos != len(data):
        raise CheckpointFormatError(f"{len(data) - pos} trailing bytes")
    return out


def atomic_write(path, data: bytes) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(path, tensors) -> None:
    atomic_write(path, encode_checkpoint(tensors))


def load_checkpoint(path) -> "OrderedDict[str, np.ndarray]":
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())
