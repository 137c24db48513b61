import numpy as np
import pytest
from hypothesis import given
from hypothesis.extra.numpy import arrays
from hypothesis import strategies as st

from isnrestore.errors import InvalidChannelError, ParseError, UnsupportedFormatError
from isnrestore.imaging import Image, decode_netpbm, encode_netpbm, load_ppm, quantize, rgb_to_y, save_ppm


def test_single_pixel_scaling():
    img = decode_netpbm(b"P6\n1 1\n255\n" + bytes([255, 0, 128]))
    np.testing.assert_array_equal(img.pixels.ravel(), [1.0, 0.0, 128 / 255])
    assert img.channels == 3 and img.shape == (1, 1)


def test_header_comments_and_whitespace():
    img = decode_netpbm(b"P5 # gray\n2\t1 # dims\n255 " + bytes([7, 9]))
    assert img.channels == 1
    np.testing.assert_array_equal(img.pixels.ravel() * 255, [7, 9])


def test_half_rounds_away_from_zero():
    assert quantize(np.array([0.5]))[0] == 128
    assert list(quantize(np.array([-0.2, 1.7, 1 / 255]))) == [0, 255, 1]


def test_file_round_trip_is_byte_exact(tmp_path):
    raw = b"P6\n3 2\n255\n" + bytes(range(0, 36, 2))
    path = tmp_path / "a.ppm"
    path.write_bytes(raw)
    save_ppm(load_ppm(path), tmp_path / "b.ppm")
    assert (tmp_path / "b.ppm").read_bytes() == raw


@given(arrays(np.uint8, st.tuples(st.sampled_from([1, 3]), st.integers(1, 6), st.integers(1, 6))))
def test_quantized_pixels_round_trip(raster):
    img = Image(raster[None] / 255.0)
    np.testing.assert_array_equal(decode_netpbm(encode_netpbm(img)).pixels, img.pixels)


@pytest.mark.parametrize("data,offset", [
    (b"P3\n1 1\n255\n", 0),
    (b"P6\n1 x\n255\n", 5),
    (b"P6\n1 1\n255\n\x00", 12),
    (b"P6\n", 3),
])
def test_malformed_input_reports_offset(data, offset):
    with pytest.raises(ParseError) as info:
        decode_netpbm(data)
    assert info.value.offset == offset


def test_sixteen_bit_unsupported():
    with pytest.raises(UnsupportedFormatError):
        decode_netpbm(b"P5\n1 1\n65535\n\x00\x00")


def test_bad_channel_count():
    with pytest.raises(InvalidChannelError):
        Image(np.zeros((1, 2, 3, 3)))


@pytest.mark.parametrize("rgb,want", [((0, 0, 0), 16 / 255), ((1, 1, 1), 235 / 255),
                                      ((1, 0, 0), (65.481 + 16) / 255)])
def test_luma(rgb, want):
    y = rgb_to_y(Image(np.array(rgb, dtype=float).reshape(1, 3, 1, 1)))
    assert y.shape == (1, 1, 1, 1)
    assert y.item() == pytest.approx(want, abs=1e-12)
    assert (65.481 + 16) / 255 == pytest.approx(0.31953, abs=1e-5)


def test_luma_rejects_gray():
    with pytest.raises(InvalidChannelError):
        rgb_to_y(Image(np.zeros((1, 1, 2, 2))))
