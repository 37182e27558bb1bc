import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from evnat.errors import BodyTooShortError, MaxvalUnsupportedError, UnsupportedMagicError
from evnat.ingest import ImageBuffer, read_pnm, write_pnm


def test_p5_literal():
    img = read_pnm(b"P5 2 2 255\n" + bytes([0, 64, 128, 255]))
    assert img.shape == (2, 2, 1)
    assert img.pixels[:, :, 0].tolist() == [[0, 64], [128, 255]]


def test_header_comments():
    img = read_pnm(b"P6\n# made by hand\n1 1\n# maxval next\n255\n" + bytes([1, 2, 3]))
    assert img.pixels.tolist() == [[[1, 2, 3]]]


def test_rgb_round_trip(rng):
    img = ImageBuffer(rng.integers(0, 256, (3, 3, 3), dtype=np.uint8))
    assert read_pnm(write_pnm(img)) == img


def test_p4_unsupported():
    with pytest.raises(UnsupportedMagicError):
        read_pnm(b"P4 1 1\n\x00")


def test_maxval_unsupported():
    with pytest.raises(MaxvalUnsupportedError):
        read_pnm(b"P5 1 1 65535\n\x00\x00")


def test_body_too_short():
    with pytest.raises(BodyTooShortError):
        read_pnm(b"P6 2 2 255\n" + bytes(11))


def test_float_buffer_written_as_8bit():
    img = ImageBuffer(np.array([[0.0, 0.5, 1.0]]), "float")
    assert read_pnm(write_pnm(img)).pixels[0, :, 0].tolist() == [0, 128, 255]


@settings(max_examples=200, deadline=None)
@given(
    st.integers(1, 12).flatmap(
        lambda h: st.integers(1, 12).flatmap(
            lambda w: st.sampled_from([1, 3]).flatmap(lambda c: arrays(np.uint8, (h, w, c)))
        )
    )
)
def test_round_trip_property(px):
    img = ImageBuffer(px)
    assert read_pnm(write_pnm(img)) == img
