"""Value types shared by the parsers and the processing stages."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional

import numpy as np

from evnat.errors import AddressOutOfBoundsError, SizeMismatchError


class Polarity(enum.IntEnum):
    OFF = 0
    ON = 1


class Event(NamedTuple):
    t: int
    x: int
    y: int
    polarity: Polarity


@dataclass(eq=False)
class EventStream:
    """Columnar event storage plus sensor geometry.

    Events are kept as four parallel arrays rather than a list of objects,
    since a single CIFAR10-DVS recording holds hundreds of thousands of them.
    Iterating or indexing yields :class:`Event` tuples.
    """

    sensor_width: int
    sensor_height: int
    t: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint64))
    x: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint16))
    y: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint16))
    polarity: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint8))
    label: Optional[int] = None

    def __post_init__(self) -> None:
        self.t = np.asarray(self.t, dtype=np.uint64).reshape(-1)
        self.x = np.asarray(self.x, dtype=np.uint16).reshape(-1)
        self.y = np.asarray(self.y, dtype=np.uint16).reshape(-1)
        self.polarity = np.asarray(self.polarity, dtype=np.uint8).reshape(-1)
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.polarity) == n):
            raise SizeMismatchError("event columns have different lengths")
        if n:
            if self.x.max() >= self.sensor_width or self.y.max() >= self.sensor_height:
                raise AddressOutOfBoundsError(
                    f"event address outside {self.sensor_width}x{self.sensor_height} sensor"
                )
            if np.any(np.diff(self.t.astype(np.int64)) < 0):
                raise ValueError("event timestamps must be non-decreasing")
            if np.any(self.polarity > 1):
                raise ValueError("polarity must be 0 (OFF) or 1 (ON)")

    @classmethod
    def from_events(cls, events, sensor_width: int, sensor_height: int, label=None) -> "EventStream":
        events = list(events)
        return cls(
            sensor_width,
            sensor_height,
            t=[e.t for e in events],
            x=[e.x for e in events],
            y=[e.y for e in events],
            polarity=[int(e.polarity) for e in events],
            label=label,
        )

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> Event:
        return Event(int(self.t[i]), int(self.x[i]), int(self.y[i]), Polarity(int(self.polarity[i])))

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.sensor_width == other.sensor_width
            and self.sensor_height == other.sensor_height
            and self.label == other.label
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.polarity, other.polarity)
        )

    def rebased(self) -> "EventStream":
        """Copy with timestamps shifted so the first event sits at t=0."""
        t = self.t - self.t[0] if len(self) else self.t.copy()
        return EventStream(
            self.sensor_width, self.sensor_height, t, self.x.copy(), self.y.copy(),
            self.polarity.copy(), self.label,
        )


class StorageKind(str, enum.Enum):
    UINT8 = "uint8"
    FLOAT = "float"


@dataclass(eq=False)
class ImageBuffer:
    """An H x W x C image, either 8-bit or real-valued in [0, 1].

    ``pixels`` is always stored as an ``(height, width, channels)`` array so
    row-major flattening gives the interleaved layout.
    """

    pixels: np.ndarray
    kind: StorageKind = StorageKind.UINT8

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError(f"expected HxWx1 or HxWx3 pixels, got shape {px.shape}")
        self.kind = StorageKind(self.kind)
        if self.kind is StorageKind.UINT8:
            if px.dtype != np.uint8:
                if np.any((px < 0) | (px > 255)) or np.any(px != np.round(px)):
                    raise ValueError("8-bit buffer values must be integers in [0, 255]")
                px = px.astype(np.uint8)
        else:
            px = px.astype(np.float64, copy=False)
            if px.size and (np.nanmin(px) < 0.0 or np.nanmax(px) > 1.0 or np.isnan(px).any()):
                raise ValueError("real-valued buffer values must lie in [0, 1]")
        self.pixels = px

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def shape(self) -> tuple:
        return self.pixels.shape

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self.kind == other.kind and np.array_equal(self.pixels, other.pixels)

    def to_float(self) -> "ImageBuffer":
        if self.kind is StorageKind.FLOAT:
            return self
        return ImageBuffer(self.pixels.astype(np.float64) / 255.0, StorageKind.FLOAT)

    def to_uint8(self) -> "ImageBuffer":
        if self.kind is StorageKind.UINT8:
            return self
        return ImageBuffer(np.round(self.pixels * 255.0).astype(np.uint8), StorageKind.UINT8)

    def as_float_array(self) -> np.ndarray:
        """Pixels as float64 in [0, 1], shape (H, W, C)."""
        return self.to_float().pixels

    @classmethod
    def from_float(cls, arr) -> "ImageBuffer":
        return cls(np.clip(np.asarray(arr, dtype=np.float64), 0.0, 1.0), StorageKind.FLOAT)


@dataclass(eq=False)
class PairedSample:
    source: ImageBuffer
    target: ImageBuffer
    label: int
    sample_id: str = ""
    class_name: str = ""

    def __post_init__(self) -> None:
        if (self.source.height, self.source.width) != (self.target.height, self.target.width):
            raise SizeMismatchError(
                f"source {self.source.height}x{self.source.width} vs "
                f"target {self.target.height}x{self.target.width}"
            )
