"""CIFAR-10 binary batch files (``data_batch_*.bin``, ``test_batch.bin``)."""

from __future__ import annotations

import numpy as np

from evnat.errors import LabelOutOfRangeError, TruncatedRecordError
from evnat.ingest.types import ImageBuffer

RECORD_SIZE = 3073
CLASSES = (
    "airplane", "automobile", "bird", "cat", "deer",
    "dog", "frog", "horse", "ship", "truck",
)


def parse_cifar10_arrays(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised parse: returns ``(labels[N], images[N, 32, 32, 3])``."""
    if len(data) % RECORD_SIZE:
        raise TruncatedRecordError(f"{len(data)} bytes is not a multiple of {RECORD_SIZE}")
    raw = np.frombuffer(data, dtype=np.uint8).reshape(-1, RECORD_SIZE)
    labels = raw[:, 0].astype(np.int64)
    bad = np.nonzero(labels > 9)[0]
    if len(bad):
        raise LabelOutOfRangeError(f"record {bad[0]} has label {labels[bad[0]]}")
    # channel-planar R, G, B -> interleaved rows
    images = raw[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1).copy()
    return labels, images


def parse_cifar10_batch(data: bytes) -> list[tuple[int, ImageBuffer]]:
    labels, images = parse_cifar10_arrays(data)
    return [(int(lab), ImageBuffer(img)) for lab, img in zip(labels, images)]


def write_cifar10_batch(records) -> bytes:
    """Inverse of :func:`parse_cifar10_batch`; used to build fixtures."""
    out = bytearray()
    for label, image in records:
        if not 0 <= label <= 9:
            raise LabelOutOfRangeError(f"label {label}")
        out.append(label)
        out += image.to_uint8().pixels.transpose(2, 0, 1).tobytes()
    return bytes(out)
