"""Canny edge detection with two-threshold hysteresis."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Final

import numpy as np
from scipy import ndimage

from handdigit.errors import ParameterError
from handdigit.services.imagecore import GrayImage, ImageRGB, rgb_to_ycbcr
from handdigit.services.skinclass import BinaryMask

logger = logging.getLogger(__name__)

_TAN_22_5: Final[float] = math.tan(math.radians(22.5))
_EIGHT_CONNECTED: Final[np.ndarray] = np.ones((3, 3), dtype=bool)

# (dx, dy) of the neighbour on the positive side of each direction bin.
_DIRECTION_STEPS: Final[dict[int, tuple[int, int]]] = {
    0: (1, 0),
    45: (1, 1),
    90: (0, 1),
    135: (-1, 1),
}


class EdgeMap(BinaryMask):
    """Binary raster of edge pixels."""


@dataclass(frozen=True, eq=False)
class GradientField:
    """Sobel magnitude and direction quantized to 0/45/90/135 degrees."""

    magnitude: np.ndarray
    direction: np.ndarray


def to_gray(image: ImageRGB) -> GrayImage:
    """Return the BT.601 luma channel."""

    return GrayImage(rgb_to_ycbcr(image).y)


def gradient_field(image: GrayImage, sigma: float) -> GradientField:
    """Blur with a Gaussian of radius ceil(3 sigma) and take Sobel gradients."""

    if sigma <= 0:
        raise ParameterError("sigma must be positive")
    radius = max(1, math.ceil(3.0 * sigma))
    blurred = ndimage.gaussian_filter(
        image.pixels.astype(np.float64), sigma, mode="nearest", radius=radius
    )
    gx = ndimage.sobel(blurred, axis=1, mode="nearest")
    gy = ndimage.sobel(blurred, axis=0, mode="nearest")
    magnitude = np.hypot(gx, gy)
    ax, ay = np.abs(gx), np.abs(gy)
    direction = np.where(gx * gy > 0, 45, 135)
    direction = np.where(ax < _TAN_22_5 * ay, 90, direction)
    direction = np.where(ay <= _TAN_22_5 * ax, 0, direction)
    direction = np.where(magnitude == 0, 0, direction)
    return GradientField(magnitude, direction.astype(np.int16))


def _shifted(values: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Return out[y, x] = values[y + dy, x + dx], zero outside the raster."""

    padded = np.pad(values, 1, mode="constant")
    height, width = values.shape
    return padded[1 + dy : 1 + dy + height, 1 + dx : 1 + dx + width]


def non_maximum_suppression(field: GradientField) -> np.ndarray:
    """Thin ridges: keep magnitudes >= the negative-side and > the positive-side neighbour."""

    magnitude = field.magnitude
    keep = np.zeros(magnitude.shape, dtype=bool)
    for angle, (dx, dy) in _DIRECTION_STEPS.items():
        selected = field.direction == angle
        ahead = _shifted(magnitude, dx, dy)
        behind = _shifted(magnitude, -dx, -dy)
        keep |= selected & (magnitude >= behind) & (magnitude > ahead)
    return np.where(keep & (magnitude > 0), magnitude, 0.0)


def hysteresis(suppressed: np.ndarray, t_low: float, t_high: float) -> np.ndarray:
    """Keep weak pixels only when 8-connected to a strong one."""

    candidates = (suppressed >= t_low) & (suppressed > 0)
    strong = suppressed >= t_high
    labels, count = ndimage.label(candidates, structure=_EIGHT_CONNECTED)
    if count == 0:
        return np.zeros(suppressed.shape, dtype=bool)
    anchored = np.unique(labels[strong & candidates])
    anchored = anchored[anchored > 0]
    return np.isin(labels, anchored)


def canny(
    image: GrayImage,
    sigma: float = 1.4,
    t_low: float | None = None,
    t_high: float | None = None,
    *,
    low_ratio: float = 0.1,
    high_ratio: float = 0.3,
) -> EdgeMap:
    """Canny edges; thresholds default to ratios of the peak gradient magnitude."""

    if t_low is not None and t_high is not None:
        _check_thresholds(t_low, t_high)
    elif not 0 < low_ratio < high_ratio:
        raise ParameterError("threshold ratios must satisfy 0 < low < high")
    field = gradient_field(image, sigma)
    peak = float(field.magnitude.max())
    if peak == 0.0:
        return EdgeMap(np.zeros(field.magnitude.shape, dtype=bool))
    if t_low is None:
        t_low = low_ratio * peak
    if t_high is None:
        t_high = high_ratio * peak
    _check_thresholds(t_low, t_high)
    edges = hysteresis(non_maximum_suppression(field), t_low, t_high)
    logger.debug("canny: %d edge pixels (t_low=%.3f, t_high=%.3f)", edges.sum(), t_low, t_high)
    return EdgeMap(edges)


def _check_thresholds(t_low: float, t_high: float) -> None:
    if not 0 < t_low < t_high:
        raise ParameterError(f"thresholds must satisfy 0 < t_low < t_high, got {t_low}, {t_high}")
