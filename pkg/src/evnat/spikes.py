"""Rate-coded spike generation and event-to-frame integration."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from evnat.errors import MultiChannelInputError
from evnat.ingest.types import EventStream, ImageBuffer, Polarity, StorageKind
from evnat.rng import make_rng


@dataclass(eq=False)
class SpikeTrain:
    """Binary occupancy of shape ``(num_steps, height, width)``."""

    spikes: np.ndarray

    def __post_init__(self) -> None:
        s = np.asarray(self.spikes)
        if s.ndim != 3:
            raise ValueError(f"spike tensor must be (steps, height, width), got {s.shape}")
        if s.dtype != bool:
            if not np.isin(s, (0, 1)).all():
                raise ValueError("spike occupancy must be 0 or 1")
            s = s.astype(bool)
        self.spikes = s

    @property
    def num_steps(self) -> int:
        return self.spikes.shape[0]

    @property
    def height(self) -> int:
        return self.spikes.shape[1]

    @property
    def width(self) -> int:
        return self.spikes.shape[2]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SpikeTrain):
            return NotImplemented
        return np.array_equal(self.spikes, other.spikes)


def poisson_encode(image: ImageBuffer, num_steps: int, max_rate: float, seed: int) -> SpikeTrain:
    """Bernoulli rate coding: pixel ``p`` fires each step with probability ``max_rate * p / 255``."""
    if image.channels != 1:
        raise MultiChannelInputError(f"expected 1 channel, got {image.channels}")
    if not 0.0 <= max_rate <= 1.0:
        raise ValueError(f"max_rate must lie in [0, 1], got {max_rate}")
    if num_steps < 0:
        raise ValueError("num_steps must be non-negative")
    rate = max_rate * image.as_float_array()[:, :, 0]
    rng = make_rng(seed)
    u = rng.random((num_steps,) + rate.shape)
    return SpikeTrain(u < rate)


def spike_train_to_events(train: SpikeTrain, step_duration: int) -> EventStream:
    """Each set bit ``(k, y, x)`` becomes an ON event at ``t = k * step_duration``."""
    if step_duration <= 0:
        raise ValueError("step_duration must be positive")
    # np.nonzero walks in C order: step, then row, then column
    k, y, x = np.nonzero(train.spikes)
    t = k.astype(np.uint64) * np.uint64(step_duration)
    p = np.full(len(t), int(Polarity.ON), dtype=np.uint8)
    return EventStream(train.width, train.height, t, x, y, p)


class SurfaceMode(str, enum.Enum):
    COUNT = "count"
    EXPONENTIAL = "exponential"


class PolarityHandling(str, enum.Enum):
    MERGE = "merge"
    ON_ONLY = "on_only"
    OFF_ONLY = "off_only"


@dataclass(frozen=True)
class TimeSurfaceConfig:
    """Integration window ``[window_start, window_end)`` in microseconds."""

    window_start: int
    window_end: int
    mode: SurfaceMode = SurfaceMode.COUNT
    tau: float = 50_000.0
    polarity_handling: PolarityHandling = PolarityHandling.MERGE

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", SurfaceMode(self.mode))
        object.__setattr__(self, "polarity_handling", PolarityHandling(self.polarity_handling))
        if self.window_end <= self.window_start:
            raise ValueError("window_end must exceed window_start")
        if self.mode is SurfaceMode.EXPONENTIAL and not self.tau > 0:
            raise ValueError("tau must be positive in exponential mode")


def time_surface(stream: EventStream, cfg: TimeSurfaceConfig) -> ImageBuffer:
    h, w = stream.sensor_height, stream.sensor_width
    t = stream.t.astype(np.int64)
    keep = (t >= cfg.window_start) & (t < cfg.window_end)
    if cfg.polarity_handling is PolarityHandling.ON_ONLY:
        keep &= stream.polarity == Polarity.ON
    elif cfg.polarity_handling is PolarityHandling.OFF_ONLY:
        keep &= stream.polarity == Polarity.OFF
    flat = stream.y[keep].astype(np.int64) * w + stream.x[keep].astype(np.int64)
    out = np.zeros(h * w)
    if cfg.mode is SurfaceMode.COUNT:
        counts = np.bincount(flat, minlength=h * w).astype(np.float64)
        peak = counts.max() if counts.size else 0.0
        if peak > 0:
            out = counts / peak
    else:
        last = np.full(h * w, -1, dtype=np.int64)
        np.maximum.at(last, flat, t[keep])
        hit = last >= 0
        out[hit] = np.exp(-(cfg.window_end - last[hit]) / cfg.tau)
    return ImageBuffer(out.reshape(h, w, 1), StorageKind.FLOAT)
