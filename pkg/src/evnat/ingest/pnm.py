"""Binary Netpbm: P5 (grayscale) and P6 (RGB), maxval 255 only."""

from __future__ import annotations

import os
import re

import numpy as np

from evnat.errors import BodyTooShortError, MaxvalUnsupportedError, ParseError, UnsupportedMagicError
from evnat.ingest.types import ImageBuffer

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def read_pnm(data: bytes) -> ImageBuffer:
    data = bytes(data)
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise UnsupportedMagicError(f"unsupported magic {magic!r}")
    pos = 2
    fields = []
    for _ in range(3):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise ParseError("incomplete Netpbm header")
        try:
            fields.append(int(m.group(1)))
        except ValueError:
            raise ParseError(f"bad header field {m.group(1)!r}") from None
        pos = m.end()
    width, height, maxval = fields
    if maxval != 255:
        raise MaxvalUnsupportedError(f"maxval {maxval} (only 255 supported)")
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise BodyTooShortError("missing whitespace before raster")
    pos += 1
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    body = data[pos : pos + need]
    if len(body) < need:
        raise BodyTooShortError(f"raster has {len(body)} of {need} bytes")
    px = np.frombuffer(body, dtype=np.uint8).reshape(height, width, channels).copy()
    return ImageBuffer(px)


def write_pnm(image: ImageBuffer) -> bytes:
    img = image.to_uint8()
    magic = b"P5" if img.channels == 1 else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, img.width, img.height)
    return header + img.pixels.tobytes()


def read_pnm_file(path) -> ImageBuffer:
    with open(path, "rb") as fh:
        return read_pnm(fh.read())


def write_pnm_file(path, image: ImageBuffer) -> None:
    os.makedirs(os.path.dirname(os.fspath(path)) or ".", exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(write_pnm(image))
