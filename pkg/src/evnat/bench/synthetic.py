"""Synthetic filled-shape images for the desk-scale profile.

Each image is a single filled circle, square or triangle in a random
colour at a random position and size on a black background, softened by a
random amount of defocus blur so the raw images are not unrealistically
sharp. The class label is the shape.
"""

from __future__ import annotations

import numpy as np

from evnat.edges import gaussian_blur_array
from evnat.ingest.types import ImageBuffer
from evnat.rng import make_rng

SHAPE_CLASSES = ("circle", "square", "triangle")


def shape_mask(kind: str, size: int, cy: float, cx: float, r: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    if kind == "circle":
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    if kind == "square":
        h = r * 0.85
        return (np.abs(yy - cy) <= h) & (np.abs(xx - cx) <= h)
    if kind == "triangle":
        # upright isosceles triangle inscribed in radius r
        top, bottom = cy - r, cy + 0.8 * r
        t = np.clip((yy - top) / (bottom - top), 0.0, None)
        return (yy >= top) & (yy <= bottom) & (np.abs(xx - cx) <= t * r)
    raise ValueError(f"unknown shape {kind!r}")


def random_color(rng: np.random.Generator, min_luma: float = 0.45) -> np.ndarray:
    while True:
        c = rng.uniform(0.15, 1.0, size=3)
        if c @ np.array([0.299, 0.587, 0.114]) >= min_luma:
            return c


def make_shape_image(kind: str, rng: np.random.Generator, size: int = 32,
                     blur_range: tuple = (0.3, 1.5)) -> ImageBuffer:
    r = rng.uniform(0.22, 0.36) * size
    margin = r + 1
    cy, cx = rng.uniform(margin, size - margin, size=2)
    mask = shape_mask(kind, size, cy, cx, r).astype(np.float64)
    color = random_color(rng)
    sigma = rng.uniform(*blur_range)
    if sigma > 0:
        mask = gaussian_blur_array(mask, sigma)
    img = mask[:, :, None] * color
    return ImageBuffer(np.round(np.clip(img, 0, 1) * 255).astype(np.uint8))


def shape_dataset(per_class: int, seed: int, size: int = 32, tag: str = "") -> list[tuple[str, int, ImageBuffer]]:
    """``per_class`` images of each shape as ``(sample_id, label, image)``."""
    out = []
    for label, kind in enumerate(SHAPE_CLASSES):
        for i in range(per_class):
            rng = make_rng(seed, "shape", tag, kind, i)
            out.append((f"{kind}_{tag}{i:05d}", label, make_shape_image(kind, rng, size)))
    return out
