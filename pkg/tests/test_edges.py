import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import ndimage

from evnat.edges import (CannyParams, canny, canny_array, gaussian_blur, gaussian_blur_array, gaussian_kernel,
                         load_soft_edges, non_maximum_suppression, quantize_direction, sobel_arrays,
                         sobel_gradients)
from evnat.errors import ThresholdOrderError
from evnat.ingest import ImageBuffer, read_pnm_file
from evnat.ingest.pnm import write_pnm_file

GOLDEN = __import__("pathlib").Path(__file__).parent / "golden" / "canny_square.pgm"


def square(size=32, lo=8, hi=24, fg=1.0, bg=0.0):
    a = np.full((size, size), bg)
    a[lo:hi, lo:hi] = fg
    return a


def test_blur_constant():
    img = ImageBuffer(np.full((9, 11, 1), 0.3), "float")
    np.testing.assert_allclose(gaussian_blur(img, 1.7).pixels, 0.3, atol=1e-12)


def test_blur_impulse_center_weight():
    a = np.zeros((15, 15))
    a[7, 7] = 1.0
    out = gaussian_blur_array(a, 1.0)
    total = sum(math.exp(-x * x / 2) for x in range(-3, 4))
    assert out[7, 7] == pytest.approx((1.0 / total) ** 2, rel=1e-12)


def test_blur_semigroup(rng):
    a = ndimage.uniform_filter(rng.random((48, 48)), 3)
    twice = gaussian_blur_array(gaussian_blur_array(a, 1.0), 1.0)
    once = gaussian_blur_array(a, math.sqrt(2))
    assert np.abs(twice - once).max() <= 1e-3


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1.0), st.integers(3, 20), st.integers(3, 20), st.floats(0.3, 2.0))
def test_blur_preserves_mean_of_constants(v, h, w, sigma):
    a = np.full((h, w), v)
    assert abs(gaussian_blur_array(a, sigma).mean() - v) <= 1e-6


def test_sobel_constant():
    mag, _ = sobel_gradients(np.full((6, 6), 0.7))
    assert not mag.any()


def test_sobel_vertical_step():
    a = np.zeros((8, 8))
    a[:, 4:] = 1.0
    gx, gy = sobel_arrays(a)
    # the 3x3 stencil straddles the step only at columns 3 and 4: 1 + 2 + 1
    assert np.all(gx[:, 3:5] == 4.0)
    assert np.abs(gx).max() == 4.0
    assert not np.delete(gx, [3, 4], axis=1).any()
    assert not gy[1:-1].any()


def test_sobel_transpose_symmetry(rng):
    a = rng.random((10, 10))
    mag, d = sobel_gradients(a)
    mag_t, d_t = sobel_gradients(a.T)
    np.testing.assert_allclose(mag_t, mag.T, atol=1e-12)
    # (gx, gy) swaps, so the angle maps to pi/2 - angle
    diff = np.angle(np.exp(1j * (d_t - (np.pi / 2 - d.T))))
    hit = mag.T > 1e-9
    assert np.abs(diff[hit]).max() < 1e-9
    step = np.zeros((8, 8))
    step[:, 4:] = 1.0
    _, ds = sobel_gradients(step)
    _, ds_t = sobel_gradients(step.T)
    assert np.allclose(ds[:, 3:5], 0.0) and np.allclose(ds_t[3:5, :], np.pi / 2)


def test_canny_constant():
    assert not canny(ImageBuffer(np.full((16, 16, 1), 90, np.uint8))).pixels.any()


def test_canny_square_matches_golden():
    golden = read_pnm_file(GOLDEN).pixels[:, :, 0] // 255
    out = canny_array(square())
    np.testing.assert_array_equal(out, golden)


def test_canny_square_is_closed_thin_contour():
    out = canny_array(square()).astype(bool)
    labels, n = ndimage.label(out, structure=np.ones((3, 3)))
    assert n == 1
    # one pixel wide: no 2x2 block is fully set, and every pixel continues the curve
    assert not (out[:-1, :-1] & out[1:, :-1] & out[:-1, 1:] & out[1:, 1:]).any()
    nb = ndimage.convolve(out.astype(int), np.ones((3, 3), int), mode="constant") - 1
    assert np.all(nb[out] >= 2)
    # the contour encloses the square interior
    filled = ndimage.binary_fill_holes(out)
    assert filled[16, 16] and not filled[0, 0]


def test_threshold_order():
    with pytest.raises(ThresholdOrderError):
        CannyParams(low_threshold=0.6, high_threshold=0.3)


def test_canny_output_buffer_is_binary(rng):
    img = ImageBuffer(rng.integers(0, 256, (20, 20, 3), dtype=np.uint8))
    px = canny(img).pixels
    assert px.shape == (20, 20, 1)
    assert set(np.unique(px)) <= {0.0, 1.0}


@pytest.mark.parametrize("values", [[255], [0], [0, 128, 255]])
def test_soft_edges(tmp_path, values):
    arr = np.resize(np.array(values, np.uint8), (3, 3, 1))
    write_pnm_file(tmp_path / "e.pgm", ImageBuffer(arr))
    out = load_soft_edges(tmp_path / "e.pgm").pixels
    np.testing.assert_allclose(out, arr / 255.0)


def shapes_strategy():
    return st.tuples(
        st.integers(12, 28), st.integers(0, 10), st.integers(0, 10), st.integers(3, 12), st.integers(3, 12),
        st.floats(0.0, 0.4), st.floats(0.6, 1.0), st.booleans(),
    )


def draw_fixture(spec):
    size, y0, x0, hh, ww, bg, fg, disc = spec
    a = np.full((size, size), bg)
    if disc:
        yy, xx = np.mgrid[:size, :size]
        a[(yy - size / 2) ** 2 + (xx - size / 2) ** 2 <= (hh / 1.5) ** 2] = fg
    else:
        a[y0 : y0 + hh, x0 : x0 + ww] = fg
    return a


@settings(max_examples=60, deadline=None)
@given(shapes_strategy())
def test_inversion_invariance(spec):
    a = draw_fixture(spec)
    np.testing.assert_array_equal(canny_array(a), canny_array(1.0 - a))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_nms_leaves_no_double_pixels_along_gradient(seed):
    r = np.random.default_rng(seed)
    a = gaussian_blur_array(r.random((16, 16)), 1.0)
    gx, gy = sobel_arrays(a)
    d = np.arctan2(gy, gx)
    thin = non_maximum_suppression(np.hypot(gx, gy), d)
    bins = quantize_direction(d)
    steps = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}
    for y, x in zip(*np.nonzero(thin)):
        dy, dx = steps[int(bins[y, x])]
        for s in (1, -1):
            ny, nx = y + s * dy, x + s * dx
            if 0 <= ny < 16 and 0 <= nx < 16 and bins[ny, nx] == bins[y, x]:
                assert thin[ny, nx] == 0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.4), st.floats(0.45, 0.9))
def test_hysteresis_pixels_connect_to_strong(seed, low, high):
    r = np.random.default_rng(seed)
    a = gaussian_blur_array(r.random((20, 20)), 1.2)
    out = canny_array(a, CannyParams(1.0, low, high)).astype(bool)
    # recompute the strong set independently
    blurred = gaussian_blur_array(a, 1.0)
    gx, gy = sobel_arrays(blurred)
    mag = np.hypot(gx, gy)
    mag = np.round(mag / mag.max(), 9)
    thin = non_maximum_suppression(mag, np.arctan2(gy, gx))
    strong = out & (thin >= high)
    seen = np.zeros_like(out)
    queue = deque(zip(*np.nonzero(strong)))
    for p in queue:
        seen[p] = True
    while queue:
        y, x = queue.popleft()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                ny, nx = y + dy, x + dx
                if 0 <= ny < 20 and 0 <= nx < 20 and out[ny, nx] and not seen[ny, nx]:
                    seen[ny, nx] = True
                    queue.append((ny, nx))
    np.testing.assert_array_equal(seen, out)
    assert np.all(thin[out] >= low)
