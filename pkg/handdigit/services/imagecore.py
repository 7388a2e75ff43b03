"""Raster images, PPM/PGM codec, box low-pass filter and YCbCr conversion."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Final

import numpy as np

from handdigit.errors import DecodeError, ParameterError

logger = logging.getLogger(__name__)

_MAXVAL: Final[int] = 255
_WHITESPACE: Final[bytes] = b" \t\n\r\v\f"

# Full-range BT.601, rows map (R, G, B) to (Y, Cb, Cr) before the chroma offset.
_RGB_TO_YCBCR: Final[np.ndarray] = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
_YCBCR_OFFSET: Final[np.ndarray] = np.array([0.0, 128.0, 128.0])


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ImageRGB:
    """Row-major 8-bit RGB raster of shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError("RGB pixels must have shape (height, width, 3)")
        if self.pixels.shape[0] < 1 or self.pixels.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        object.__setattr__(self, "pixels", _frozen(self.pixels.astype(np.uint8, copy=False)))

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def data(self) -> bytes:
        return self.pixels.tobytes()


@dataclass(frozen=True, eq=False)
class ImageYCbCr:
    """Row-major 8-bit YCbCr raster of shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError("YCbCr pixels must have shape (height, width, 3)")
        object.__setattr__(self, "pixels", _frozen(self.pixels.astype(np.uint8, copy=False)))

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def y(self) -> np.ndarray:
        return self.pixels[:, :, 0]

    @property
    def cb(self) -> np.ndarray:
        return self.pixels[:, :, 1]

    @property
    def cr(self) -> np.ndarray:
        return self.pixels[:, :, 2]


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Row-major 8-bit single-channel raster of shape (height, width)."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        if self.pixels.ndim != 2:
            raise ValueError("gray pixels must have shape (height, width)")
        object.__setattr__(self, "pixels", _frozen(self.pixels.astype(np.uint8, copy=False)))

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])


@dataclass(frozen=True)
class PnmHeader:
    """Parsed PPM/PGM header fields."""

    magic: str
    width: int
    height: int
    maxval: int
    offset: int
    comments: tuple[str, ...] = ()

    @property
    def channels(self) -> int:
        return 3 if self.magic == "P6" else 1


def round_half_away(values: np.ndarray) -> np.ndarray:
    """Round to the nearest integer with ties away from zero."""

    values = np.asarray(values, dtype=np.float64)
    return np.sign(values) * np.floor(np.abs(values) + 0.5)


def _to_byte(values: np.ndarray) -> np.ndarray:
    return np.clip(round_half_away(values), 0, _MAXVAL).astype(np.uint8)


def parse_header(data: bytes) -> PnmHeader:
    """Parse the whitespace-delimited header of a binary PPM or PGM file."""

    if len(data) < 2 or data[:2] not in (b"P6", b"P5"):
        raise DecodeError("magic", "expected P6 or P5")
    magic = data[:2].decode("ascii")
    position = 2
    tokens: list[int] = []
    comments: list[str] = []
    names = ("width", "height", "maxval")
    while len(tokens) < 3:
        field = names[len(tokens)]
        while position < len(data) and data[position] in _WHITESPACE:
            position += 1
        if position < len(data) and data[position] == ord("#"):
            end = data.find(b"\n", position)
            if end < 0:
                raise DecodeError(field, "unterminated comment")
            comments.append(data[position + 1 : end].decode("ascii", "replace").strip())
            position = end + 1
            continue
        start = position
        while position < len(data) and data[position] not in _WHITESPACE:
            position += 1
        token = data[start:position]
        if not token:
            raise DecodeError(field, "missing value")
        if not token.isdigit():
            raise DecodeError(field, f"not a decimal integer: {token[:16]!r}")
        tokens.append(int(token))
    if position >= len(data):
        raise DecodeError("payload", "missing separator after header")
    width, height, maxval = tokens
    if width < 1:
        raise DecodeError("width", "must be at least 1")
    if height < 1:
        raise DecodeError("height", "must be at least 1")
    if maxval != _MAXVAL:
        raise DecodeError("maxval", f"expected 255, got {maxval}")
    return PnmHeader(magic, width, height, maxval, position + 1, tuple(comments))


def load_image(data: bytes) -> ImageRGB:
    """Decode a binary PPM (P6) or PGM (P5, promoted to gray RGB) payload."""

    header = parse_header(data)
    expected = header.width * header.height * header.channels
    payload = data[header.offset : header.offset + expected]
    if len(payload) < expected:
        raise DecodeError(
            "payload", f"truncated: expected {expected} bytes, got {len(payload)}"
        )
    raw = np.frombuffer(payload, dtype=np.uint8)
    if header.channels == 3:
        pixels = raw.reshape(header.height, header.width, 3)
    else:
        gray = raw.reshape(header.height, header.width)
        pixels = np.repeat(gray[:, :, None], 3, axis=2)
    return ImageRGB(pixels.copy())


def load_gray(data: bytes) -> GrayImage:
    """Decode a PGM payload (or the first channel of a PPM) as a gray image."""

    return GrayImage(load_image(data).pixels[:, :, 0])


def encode_ppm(image: ImageRGB) -> bytes:
    """Encode an RGB image as binary PPM with maxval 255."""

    header = f"P6\n{image.width} {image.height}\n{_MAXVAL}\n".encode("ascii")
    return header + image.data


def encode_pgm(pixels: np.ndarray, comments: tuple[str, ...] = ()) -> bytes:
    """Encode a (height, width) uint8 array as binary PGM with maxval 255."""

    pixels = np.asarray(pixels, dtype=np.uint8)
    height, width = pixels.shape
    lines = ["P5"] + [f"# {comment}" for comment in comments]
    lines += [f"{width} {height}", str(_MAXVAL)]
    header = ("\n".join(lines) + "\n").encode("ascii")
    return header + np.ascontiguousarray(pixels).tobytes()


def lowpass(image: ImageRGB, radius: int) -> ImageRGB:
    """Box mean over the (2r+1)^2 edge-clamped neighbourhood of every pixel."""

    if radius < 0:
        raise ParameterError("radius must be non-negative")
    if radius == 0:
        return image
    size = 2 * radius + 1
    count = size * size
    padded = np.pad(
        image.pixels.astype(np.int64), ((radius, radius), (radius, radius), (0, 0)), mode="edge"
    )
    integral = np.zeros(
        (padded.shape[0] + 1, padded.shape[1] + 1, 3), dtype=np.int64
    )
    integral[1:, 1:] = padded.cumsum(axis=0).cumsum(axis=1)
    height, width = image.height, image.width
    sums = (
        integral[size : size + height, size : size + width]
        - integral[:height, size : size + width]
        - integral[size : size + height, :width]
        + integral[:height, :width]
    )
    # Integer rounding of sum / count, half up (sums are non-negative).
    means = (2 * sums + count) // (2 * count)
    return ImageRGB(means.astype(np.uint8))


def rgb_to_ycbcr(image: ImageRGB) -> ImageYCbCr:
    """Full-range BT.601 conversion with half-away rounding and clamping."""

    rgb = image.pixels.astype(np.float64)
    ycc = rgb @ _RGB_TO_YCBCR.T + _YCBCR_OFFSET
    return ImageYCbCr(_to_byte(ycc))


def ycbcr_to_rgb(y: np.ndarray, cb: np.ndarray, cr: np.ndarray) -> np.ndarray:
    """Inverse full-range BT.601 conversion returning a uint8 (..., 3) array."""

    y = np.asarray(y, dtype=np.float64)
    cb = np.asarray(cb, dtype=np.float64) - 128.0
    cr = np.asarray(cr, dtype=np.float64) - 128.0
    red = y + 1.402 * cr
    green = y - 0.344136 * cb - 0.714136 * cr
    blue = y + 1.772 * cb
    return _to_byte(np.stack([red, green, blue], axis=-1))
