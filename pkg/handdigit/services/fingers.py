"""Hand bounds, anthropometric palm window and finger isolation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Final

import numpy as np

from handdigit.errors import DegenerateGeometryError, ParameterError
from handdigit.services.geometry import (
    Rect,
    convex_hull,
    min_perimeter_rect,
    pixel_corner_points,
    row_extreme_centres,
)
from handdigit.services.imagecore import round_half_away
from handdigit.services.skinclass import BinaryMask

logger = logging.getLogger(__name__)

PALM_LENGTH_RATIO: Final[float] = 0.496
PALM_WIDTH_RATIO: Final[float] = 0.44


@dataclass(frozen=True)
class HandBounds:
    """Minimum-perimeter bounding rectangle and the hand dimensions it implies."""

    rect: Rect
    hand_length: float
    hand_width: float


@dataclass(frozen=True)
class PalmWindow:
    """Axis-aligned palm placement; rows y..y+height-1, columns x..x+width-1."""

    x: int
    y: int
    width: int
    height: int
    skin_count: int

    @property
    def centre(self) -> tuple[float, float]:
        """Window centre in pixel-centre coordinates."""

        return self.x + (self.width - 1) / 2.0, self.y + (self.height - 1) / 2.0

    @property
    def radius(self) -> float:
        """Radius of the circle through the window's corners."""

        return 0.5 * math.hypot(self.width, self.height)

    @property
    def bottom(self) -> int:
        return self.y + self.height - 1


def hand_bounds(mask: BinaryMask) -> HandBounds:
    """Rotating-calipers rectangle around the pixel squares of the hand."""

    if mask.count == 0:
        raise DegenerateGeometryError("hand mask is empty")
    if convex_hull(row_extreme_centres(mask)).shape[0] < 3:
        raise DegenerateGeometryError("hand pixels are collinear")
    rect = min_perimeter_rect(convex_hull(pixel_corner_points(mask)))
    length, width = max(rect.width, rect.height), min(rect.width, rect.height)
    return HandBounds(rect=rect, hand_length=length, hand_width=width)


def palm_dims(
    hand_length: float,
    length_ratio: float = PALM_LENGTH_RATIO,
    width_ratio: float = PALM_WIDTH_RATIO,
) -> tuple[float, float]:
    """Return (palm_length, palm_width) from the hand length."""

    if hand_length <= 0:
        raise ParameterError("hand_length must be positive")
    return length_ratio * hand_length, width_ratio * hand_length


def window_size(dims: tuple[float, float]) -> tuple[int, int]:
    """Rounded (height, width) of the palm window."""

    height = max(1, int(round_half_away(dims[0])))
    width = max(1, int(round_half_away(dims[1])))
    return height, width


def pad_to_fit(mask: BinaryMask, dims: tuple[float, float]) -> BinaryMask:
    """Pad the canvas with background so the palm window fits."""

    height, width = window_size(dims)
    extra_y = max(0, height - mask.height)
    extra_x = max(0, width - mask.width)
    if not extra_x and not extra_y:
        return mask
    padding = ((extra_y // 2, extra_y - extra_y // 2), (extra_x // 2, extra_x - extra_x // 2))
    return BinaryMask(np.pad(mask.bits, padding))


def window_counts(mask: BinaryMask, height: int, width: int) -> np.ndarray:
    """Skin count of every stride-1 window placement, indexed [y, x]."""

    integral = np.zeros((mask.height + 1, mask.width + 1), dtype=np.int64)
    integral[1:, 1:] = mask.bits.astype(np.int64).cumsum(axis=0).cumsum(axis=1)
    return (
        integral[height:, width:]
        - integral[:-height, width:]
        - integral[height:, :-width]
        + integral[:-height, :-width]
    )


def locate_palm(mask: BinaryMask, dims: tuple[float, float]) -> PalmWindow:
    """Placement with the most skin pixels; ties go to the smallest (y, x)."""

    height, width = window_size(dims)
    if height > mask.height or width > mask.width:
        raise ParameterError(
            f"palm window {width}x{height} exceeds canvas {mask.width}x{mask.height}"
        )
    counts = window_counts(mask, height, width)
    best = int(np.argmax(counts))
    y, x = divmod(best, counts.shape[1])
    return PalmWindow(x=x, y=y, width=width, height=height, skin_count=int(counts[y, x]))


def strip_to_fingers(mask: BinaryMask, palm: PalmWindow) -> BinaryMask:
    """Clear the palm's circumscribed circle (inclusive) and everything below the window."""

    cx, cy = palm.centre
    ys, xs = np.mgrid[0 : mask.height, 0 : mask.width]
    in_circle = (xs - cx) ** 2 + (ys - cy) ** 2 <= palm.radius**2
    below = ys > palm.bottom
    fingers = BinaryMask(mask.bits & ~in_circle & ~below)
    logger.debug(
        "palm at (%d, %d) %dx%d; %d finger pixels remain",
        palm.x,
        palm.y,
        palm.width,
        palm.height,
        fingers.count,
    )
    return fingers
