"""Canny edge detection and soft-edge map loading.

All stages use reflect padding (``d c b | a b c d | c b a``) so borders do
not produce spurious edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from evnat.errors import ThresholdOrderError
from evnat.ingest.pnm import read_pnm_file
from evnat.ingest.types import ImageBuffer, StorageKind

LUMA = np.array([0.299, 0.587, 0.114])


# magnitudes are rounded to this many decimals (relative to the peak) before
# non-maximum suppression so ulp-level noise cannot break symmetric ties
_MAG_DECIMALS = 9


@dataclass(frozen=True)
class CannyParams:
    sigma: float = 1.0
    low_threshold: float = 0.1
    high_threshold: float = 0.3

    def __post_init__(self) -> None:
        if not self.low_threshold < self.high_threshold:
            raise ThresholdOrderError(
                f"low threshold {self.low_threshold} must be below high {self.high_threshold}"
            )
        if not (0 < self.low_threshold and self.high_threshold <= 1):
            raise ValueError("thresholds must satisfy 0 < low < high <= 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


def _as_gray(image) -> np.ndarray:
    if isinstance(image, ImageBuffer):
        arr = image.as_float_array()
        if arr.shape[2] == 3:
            return arr @ LUMA
        return arr[:, :, 0]
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr @ LUMA if arr.shape[2] == 3 else arr[:, :, 0]
    return arr


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x**2) / (2 * sigma**2))
    return k / k.sum()


def _correlate_rows(a: np.ndarray, k: np.ndarray) -> np.ndarray:
    r = len(k) // 2
    p = np.pad(a, ((0, 0), (r, r)), mode="reflect")
    out = np.zeros_like(a)
    for i, w in enumerate(k):
        out += w * p[:, i : i + a.shape[1]]
    return out


def gaussian_blur_array(a: np.ndarray, sigma: float) -> np.ndarray:
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    k = gaussian_kernel(sigma)
    return _correlate_rows(_correlate_rows(a, k).T, k).T


def gaussian_blur(image, sigma: float) -> ImageBuffer:
    """Separable Gaussian blur of a single-channel image (radius ``ceil(3*sigma)``)."""
    return ImageBuffer(gaussian_blur_array(_as_gray(image), sigma)[:, :, None], StorageKind.FLOAT)


def sobel_arrays(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # separable form: central difference along one axis, [1, 2, 1] smoothing
    # along the other; flat regions give exact zeros
    p = np.pad(a, 1, mode="reflect")
    dx = p[:, 2:] - p[:, :-2]
    dy = p[2:, :] - p[:-2, :]
    gx = dx[:-2] + 2.0 * dx[1:-1] + dx[2:]
    gy = dy[:, :-2] + 2.0 * dy[:, 1:-1] + dy[:, 2:]
    return gx, gy


def sobel_gradients(image) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(magnitude, direction)``; direction is ``atan2(gy, gx)`` in radians.

    ``gy`` is positive where intensity grows downwards (row index increasing).
    """
    gx, gy = sobel_arrays(_as_gray(image))
    return np.hypot(gx, gy), np.arctan2(gy, gx)


def quantize_direction(direction: np.ndarray) -> np.ndarray:
    """Map angles to bins 0..3 for 0, 45, 90 and 135 degrees (mod 180)."""
    deg = np.rad2deg(direction) % 180.0
    return (np.floor((deg + 22.5) / 45.0).astype(np.int64)) % 4


# (dy, dx) of the neighbour along the gradient for each direction bin
_NEIGHBOUR = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}


def non_maximum_suppression(mag: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Thin ridges to one pixel.

    A pixel survives if it is strictly greater than the neighbour behind it
    and at least as large as the one ahead of it along the quantised
    gradient, so a plateau of two equal pixels keeps exactly one.
    """
    bins = quantize_direction(direction)
    p = np.pad(mag, 1, mode="constant")
    h, w = mag.shape
    keep = np.zeros(mag.shape, dtype=bool)
    for b, (dy, dx) in _NEIGHBOUR.items():
        ahead = p[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        behind = p[1 - dy : 1 - dy + h, 1 - dx : 1 - dx + w]
        sel = bins == b
        keep |= sel & (mag > behind) & (mag >= ahead)
    return np.where(keep, mag, 0.0)


def hysteresis(thin: np.ndarray, low: float, high: float) -> np.ndarray:
    weak = thin >= low
    strong = thin >= high
    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return np.zeros(thin.shape, dtype=bool)
    seeded = np.zeros(n + 1, dtype=bool)
    seeded[np.unique(labels[strong])] = True
    seeded[0] = False
    return seeded[labels]


def canny_array(gray: np.ndarray, params: CannyParams = CannyParams()) -> np.ndarray:
    blurred = gaussian_blur_array(np.asarray(gray, dtype=np.float64), params.sigma)
    gx, gy = sobel_arrays(blurred)
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak <= 0:
        return np.zeros(gray.shape, dtype=np.uint8)
    mag = np.round(mag / peak, _MAG_DECIMALS)
    thin = non_maximum_suppression(mag, np.arctan2(gy, gx))
    return hysteresis(thin, params.low_threshold, params.high_threshold).astype(np.uint8)


def canny(image, params: CannyParams = CannyParams()) -> ImageBuffer:
    """Binary edge map with values in {0, 1}. RGB input is converted to luminance first."""
    return ImageBuffer(canny_array(_as_gray(image), params)[:, :, None].astype(np.float64), StorageKind.FLOAT)


def load_soft_edges(path) -> ImageBuffer:
    """Load a precomputed soft-edge map (e.g. HED output) as reals in [0, 1]."""
    img = read_pnm_file(path)
    arr = img.as_float_array()
    if arr.shape[2] == 3:
        arr = (arr @ LUMA)[:, :, None]
    return ImageBuffer(arr, StorageKind.FLOAT)
