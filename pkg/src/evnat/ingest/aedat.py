"""AEDAT 2.0 reading and writing.

File layout: zero or more ASCII header lines starting with ``#``, then
8-byte big-endian records of (32-bit address, 32-bit timestamp in us).
How x, y and polarity are packed into the address word is described by an
:class:`AddressLayout`; :data:`DVS128` is the default.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from evnat.errors import (
    AddressOutOfBoundsError,
    EmptyHeaderMalformedError,
    TruncatedRecordError,
    ValueOverflowError,
)
from evnat.ingest.types import EventStream

HEADER = b"#!AER-DAT2.0\n"
_RECORD = np.dtype([("address", ">u4"), ("t", ">u4")])


@dataclass(frozen=True)
class AddressLayout:
    """Bit-field positions of x, y and polarity inside the address word."""

    x_shift: int = 1
    x_bits: int = 7
    y_shift: int = 8
    y_bits: int = 7
    polarity_shift: int = 0
    width: int = 128
    height: int = 128
    name: str = "DVS128"

    @property
    def x_mask(self) -> int:
        return (1 << self.x_bits) - 1

    @property
    def y_mask(self) -> int:
        return (1 << self.y_bits) - 1


DVS128 = AddressLayout()


def split_header(data: bytes) -> tuple[list[bytes], bytes]:
    """Separate the ``#`` header lines from the binary body."""
    lines = []
    pos = 0
    while pos < len(data) and data[pos : pos + 1] == b"#":
        end = data.find(b"\n", pos)
        if end < 0:
            raise EmptyHeaderMalformedError("header line is not terminated by a newline")
        lines.append(data[pos : end + 1])
        pos = end + 1
    return lines, data[pos:]


def parse_aedat(data: bytes, layout: AddressLayout = DVS128, label=None) -> EventStream:
    _, body = split_header(bytes(data))
    if len(body) % 8:
        raise TruncatedRecordError(f"body of {len(body)} bytes is not a multiple of 8")
    rec = np.frombuffer(body, dtype=_RECORD)
    addr = rec["address"].astype(np.uint32)
    x = (addr >> layout.x_shift) & layout.x_mask
    y = (addr >> layout.y_shift) & layout.y_mask
    p = (addr >> layout.polarity_shift) & 1
    if len(rec) and (x.max() >= layout.width or y.max() >= layout.height):
        raise AddressOutOfBoundsError(
            f"decoded address exceeds {layout.width}x{layout.height} sensor"
        )
    t = rec["t"].astype(np.uint64)
    if len(t):
        t = t - t[0]
    return EventStream(layout.width, layout.height, t, x, y, p, label)


def write_aedat(stream: EventStream, layout: AddressLayout = DVS128) -> bytes:
    n = len(stream)
    if n:
        if int(stream.x.max()) > layout.x_mask or int(stream.y.max()) > layout.y_mask:
            raise ValueOverflowError(
                f"address does not fit {layout.x_bits}-bit x / {layout.y_bits}-bit y fields"
            )
        if int(stream.x.max()) >= layout.width or int(stream.y.max()) >= layout.height:
            raise ValueOverflowError(f"address outside {layout.width}x{layout.height} layout")
        if int(stream.t.max()) > 0xFFFFFFFF:
            raise ValueOverflowError("timestamp does not fit in 32 bits")
    rec = np.empty(n, dtype=_RECORD)
    rec["address"] = (
        (stream.x.astype(np.uint32) << layout.x_shift)
        | (stream.y.astype(np.uint32) << layout.y_shift)
        | (stream.polarity.astype(np.uint32) << layout.polarity_shift)
    )
    rec["t"] = stream.t.astype(np.uint32)
    return HEADER + rec.tobytes()


def read_aedat_file(path, layout: AddressLayout = DVS128, label=None) -> EventStream:
    with open(path, "rb") as fh:
        return parse_aedat(fh.read(), layout, label)


def write_aedat_file(path, stream: EventStream, layout: AddressLayout = DVS128) -> None:
    with open(path, "wb") as fh:
        fh.write(write_aedat(stream, layout))
