from __future__ import annotations

import numpy as np
import pytest

from handdigit.errors import DecodeError, ParameterError
from handdigit.services.imagecore import (
    ImageRGB,
    encode_pgm,
    encode_ppm,
    load_gray,
    load_image,
    lowpass,
    parse_header,
    rgb_to_ycbcr,
    round_half_away,
    ycbcr_to_rgb,
)


def test_round_half_away_breaks_ties_away_from_zero():
    assert round_half_away(np.array([0.5, -0.5, 1.5, 2.4, -2.6])).tolist() == [
        1.0,
        -1.0,
        2.0,
        2.0,
        -3.0,
    ]


def test_parse_header_collects_comments():
    data = b"P5\n# hand_length=12.5\n3 2\n255\n" + bytes(6)
    header = parse_header(data)
    assert (header.magic, header.width, header.height, header.maxval) == ("P5", 3, 2, 255)
    assert header.comments == ("hand_length=12.5",)
    assert data[header.offset :] == bytes(6)


@pytest.mark.parametrize(
    ("data", "field"),
    [
        (b"P3\n1 1\n255\n", "magic"),
        (b"", "magic"),
        (b"P6\n0 1\n255\n", "width"),
        (b"P6\n1 x\n255\n", "height"),
        (b"P6\n1 1\n65535\n", "maxval"),
        (b"P6\n2 2\n255\n" + bytes(5), "payload"),
    ],
)
def test_malformed_headers_name_the_failing_field(data: bytes, field: str):
    with pytest.raises(DecodeError) as excinfo:
        load_image(data)
    assert excinfo.value.field == field


def test_pgm_is_promoted_to_gray_rgb():
    image = load_image(b"P5\n2 1\n255\n" + bytes([10, 200]))
    assert image.pixels.tolist() == [[[10, 10, 10], [200, 200, 200]]]
    assert load_gray(b"P5\n2 1\n255\n" + bytes([10, 200])).pixels.tolist() == [[10, 200]]


def test_ppm_encoding_decodes_to_the_same_pixels():
    rng = np.random.default_rng(7)
    pixels = rng.integers(0, 256, size=(4, 5, 3), dtype=np.uint8)
    decoded = load_image(encode_ppm(ImageRGB(pixels)))
    assert np.array_equal(decoded.pixels, pixels)


def test_encode_pgm_writes_comment_lines():
    data = encode_pgm(np.zeros((1, 2), dtype=np.uint8), ("a=1",))
    assert data.startswith(b"P5\n# a=1\n2 1\n255\n")


def test_lowpass_radius_zero_is_identity():
    image = ImageRGB(np.full((3, 3, 3), 9, dtype=np.uint8))
    assert lowpass(image, 0) is image


def test_lowpass_spreads_an_impulse_over_its_neighbourhood():
    pixels = np.zeros((5, 5, 3), dtype=np.uint8)
    pixels[2, 2] = 255
    smoothed = lowpass(ImageRGB(pixels), 1).pixels[:, :, 0]
    # 255 / 9 = 28.33
    assert smoothed[1:4, 1:4].tolist() == [[28] * 3] * 3
    assert smoothed[0].tolist() == [0] * 5


def test_lowpass_clamps_at_the_border():
    pixels = np.zeros((3, 3, 3), dtype=np.uint8)
    pixels[0, 0] = 90
    # The corner is replicated into four of its nine window cells.
    assert lowpass(ImageRGB(pixels), 1).pixels[0, 0, 0] == 40


def test_lowpass_rejects_negative_radius():
    with pytest.raises(ParameterError):
        lowpass(ImageRGB(np.zeros((1, 1, 3), dtype=np.uint8)), -1)


def test_achromatic_pixels_have_neutral_chroma():
    levels = np.arange(256, dtype=np.uint8)
    gray = ImageRGB(np.repeat(levels[None, :, None], 3, axis=2))
    ycc = rgb_to_ycbcr(gray)
    assert ycc.y[0].tolist() == levels.tolist()
    assert set(ycc.cb[0].tolist()) == {128}
    assert set(ycc.cr[0].tolist()) == {128}


def test_primary_red_converts_with_clamping():
    ycc = rgb_to_ycbcr(ImageRGB(np.array([[[255, 0, 0]]], dtype=np.uint8)))
    assert ycc.pixels[0, 0].tolist() == [76, 85, 255]


def test_inverse_conversion_stays_within_one_level():
    y = np.array([150.0, 90.0])
    cb = np.array([100.0, 155.0])
    cr = np.array([165.0, 110.0])
    rgb = ycbcr_to_rgb(y, cb, cr)
    back = rgb_to_ycbcr(ImageRGB(rgb[None, :, :])).pixels[0].astype(int)
    expected = np.column_stack([y, cb, cr]).astype(int)
    assert np.abs(back - expected).max() <= 1
