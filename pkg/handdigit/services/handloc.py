"""Hand localization, orientation estimate and vertical adjustment."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy import ndimage

from handdigit.errors import FitError, ParameterError
from handdigit.services.edgedetect import EdgeMap
from handdigit.services.geometry import (
    Ellipse,
    Region,
    StructuringElement,
    connected_components,
    fit_ellipse,
    morph,
    rasterize_ellipse_perimeter,
)
from handdigit.services.skinclass import BinaryMask

logger = logging.getLogger(__name__)

LocalizationMethod = Literal["ellipse", "comparison"]
PerimeterReading = Literal["skin", "edges"]

_MIN_FIT_POINTS = 5
_EDGE_REACH = 2
_ON_AXIS = 1e-6  # pixels this close to the minor axis belong to neither half


@dataclass(frozen=True)
class LocalizationOutcome:
    """Regions judged to be hands (at most two) and the optional face."""

    hands: tuple[Region, ...]
    face: Region | None
    method: LocalizationMethod
    scores: tuple[float, ...] = field(default=())

    @property
    def found(self) -> bool:
        return bool(self.hands)


@dataclass(frozen=True)
class OrientedHand:
    """A single hand rotated vertical with the fingers toward smaller y."""

    mask: BinaryMask
    theta_applied: float
    ellipse: Ellipse
    flipped: bool = False
    low_confidence: bool = False


@dataclass(frozen=True)
class FingerSide:
    """Which half of the split ellipse holds the fingers."""

    side: Literal["up", "down"]
    low_confidence: bool
    up_count: int
    down_count: int


def perimeter_ratio(
    ellipse: Ellipse,
    reference: BinaryMask,
    inset: float = 2.0,
) -> float:
    """Share of rasterized perimeter pixels (of the inset ellipse) that are true."""

    perimeter = rasterize_ellipse_perimeter(ellipse.shrunk(inset))
    xs, ys = perimeter[:, 0], perimeter[:, 1]
    inside = (xs >= 0) & (xs < reference.width) & (ys >= 0) & (ys < reference.height)
    hits = np.zeros(len(perimeter), dtype=bool)
    hits[inside] = reference.bits[ys[inside], xs[inside]]
    return float(hits.sum()) / float(len(perimeter))


def _region_edge_points(region: Region, edges: EdgeMap) -> np.ndarray:
    own = region.to_mask(edges.width, edges.height).bits
    reach = ndimage.binary_dilation(own, structure=np.ones((2 * _EDGE_REACH + 1,) * 2, bool))
    ys, xs = np.nonzero(edges.bits & reach)
    if xs.size >= _MIN_FIT_POINTS:
        return np.column_stack([xs, ys])
    # Too few edge pixels: fall back to the region's own boundary.
    boundary = own & ~ndimage.binary_erosion(own, structure=np.ones((3, 3), bool))
    ys, xs = np.nonzero(boundary)
    return np.column_stack([xs, ys])


def locate_ellipse_method(
    mask: BinaryMask,
    edges: EdgeMap,
    face_ratio_threshold: float = 0.8,
    *,
    inset: float = 2.0,
    reading: PerimeterReading = "skin",
    max_regions: int = 3,
    min_area: int = 1,
) -> LocalizationOutcome:
    """Score each large region by how much of its fitted ellipse perimeter is filled."""

    if not 0.0 < face_ratio_threshold < 1.0:
        raise ParameterError("face_ratio_threshold must lie in (0, 1)")
    regions = [r for r in connected_components(mask) if r.area >= min_area][:max_regions]
    if not regions:
        return LocalizationOutcome((), None, "ellipse")
    reference = mask if reading == "skin" else edges
    scores: list[float] = []
    for region in regions:
        try:
            ellipse = fit_ellipse(_region_edge_points(region, edges))
            score = perimeter_ratio(ellipse, reference, inset)
        except FitError:
            logger.debug("ellipse fit failed for region of area %d; treating as hand", region.area)
            score = 0.0
        scores.append(score)
    face_index: int | None = None
    for index, score in enumerate(scores):
        if score >= face_ratio_threshold and (face_index is None or score > scores[face_index]):
            face_index = index
    hands = tuple(
        region
        for index, region in enumerate(regions)
        if index != face_index and scores[index] < face_ratio_threshold
    )[:2]
    face = regions[face_index] if face_index is not None else None
    logger.debug("ellipse localization scores: %s", ["%.3f" % s for s in scores])
    return LocalizationOutcome(hands, face, "ellipse", tuple(scores))


def locate_comparison_method(
    regions: Sequence[Region],
    image_height: int,
    *,
    two_hand_ratio: float = 1.5,
) -> LocalizationOutcome:
    """Area and barycenter-height rules over the three largest regions."""

    candidates = list(regions[:3])
    if not candidates:
        return LocalizationOutcome((), None, "comparison")
    if len(candidates) == 1:
        return LocalizationOutcome((candidates[0],), None, "comparison")

    def height_above_bottom(region: Region) -> float:
        return image_height - region.barycenter[1]

    if len(candidates) == 2:
        large, small = candidates
        if large.area / small.area < two_hand_ratio:
            return LocalizationOutcome((large, small), None, "comparison")
    # Barycenter height decides; on equal height the larger region is the face.
    face = max(candidates, key=height_above_bottom)
    hands = tuple(region for region in candidates if region is not face)
    return LocalizationOutcome(hands, face, "comparison")


def thumb_correction(
    hand_mask: BinaryMask, dilate_factor: float = 0.05, erode_factor: float = 0.10
) -> BinaryMask:
    """Close the finger gaps with a diamond, then erode the thumb with a disk."""

    ys, xs = np.nonzero(hand_mask.bits)
    if xs.size == 0:
        return hand_mask
    extent = max(int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1))
    dilate_radius = max(1, int(round(dilate_factor * extent)))
    erode_radius = max(1, int(round(erode_factor * extent)))
    pad = dilate_radius + 1
    padded = BinaryMask(np.pad(hand_mask.bits, pad))
    closed = morph(padded, "dilate", StructuringElement("diamond", dilate_radius))
    corrected = morph(closed, "erode", StructuringElement("disk", erode_radius))
    return BinaryMask(corrected.bits[pad:-pad, pad:-pad])


def hand_orientation(
    hand_mask: BinaryMask, dilate_factor: float = 0.05, erode_factor: float = 0.10
) -> tuple[float, Ellipse]:
    """Orientation of the thumb-corrected hand from a least-squares ellipse."""

    corrected = thumb_correction(hand_mask, dilate_factor, erode_factor)
    points = corrected.coordinates()
    if points.shape[0] >= _MIN_FIT_POINTS:
        try:
            ellipse = fit_ellipse(points)
            return ellipse.theta, ellipse
        except FitError:
            logger.warning("fit on corrected hand failed; using the uncorrected mask")
    else:
        logger.warning(
            "thumb correction left %d pixels; using the uncorrected mask", points.shape[0]
        )
    points = hand_mask.coordinates()
    if points.shape[0] < _MIN_FIT_POINTS:
        raise FitError(f"hand mask has {points.shape[0]} pixels, need {_MIN_FIT_POINTS}")
    ellipse = fit_ellipse(points)
    return ellipse.theta, ellipse


def rotate_mask(hand_mask: BinaryMask, angle: float, margin: int = 2) -> BinaryMask:
    """Rotate counter-clockwise (on screen) about the rounded barycenter.

    Nearest-neighbour sampling; the result is cropped to the rotated content
    plus ``margin`` background pixels on every side.
    """

    points = hand_mask.coordinates()
    if points.shape[0] == 0:
        return hand_mask
    pivot_x = float(np.floor(points[:, 0].mean() + 0.5))
    pivot_y = float(np.floor(points[:, 1].mean() + 0.5))
    cos_a, sin_a = _snapped(math.cos(angle)), _snapped(math.sin(angle))
    dx = points[:, 0] - pivot_x
    dy = points[:, 1] - pivot_y
    # Forward map of pixel centres bounds the output canvas.
    fx = dx * cos_a + dy * sin_a
    fy = -dx * sin_a + dy * cos_a
    reach = 1
    x_lo = int(math.floor(fx.min())) - reach - margin
    x_hi = int(math.ceil(fx.max())) + reach + margin
    y_lo = int(math.floor(fy.min())) - reach - margin
    y_hi = int(math.ceil(fy.max())) + reach + margin
    out_y, out_x = np.mgrid[y_lo : y_hi + 1, x_lo : x_hi + 1]
    src_x = np.floor(out_x * cos_a - out_y * sin_a + pivot_x + 0.5).astype(np.int64)
    src_y = np.floor(out_x * sin_a + out_y * cos_a + pivot_y + 0.5).astype(np.int64)
    valid = (
        (src_x >= 0) & (src_x < hand_mask.width) & (src_y >= 0) & (src_y < hand_mask.height)
    )
    bits = np.zeros(out_x.shape, dtype=bool)
    bits[valid] = hand_mask.bits[src_y[valid], src_x[valid]]
    return crop_to_content(BinaryMask(bits), margin)


def rotate_to_vertical(hand_mask: BinaryMask, theta: float, margin: int = 2) -> BinaryMask:
    """Rotate by (90 degrees - theta) so the major axis becomes vertical."""

    return rotate_mask(hand_mask, math.pi / 2.0 - theta, margin)


def crop_to_content(mask: BinaryMask, margin: int = 0) -> BinaryMask:
    """Crop to the true-pixel bounding box plus a background margin."""

    ys, xs = np.nonzero(mask.bits)
    if xs.size == 0:
        return mask
    bits = mask.bits[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]
    return BinaryMask(np.pad(bits, margin))


def flip_vertical(mask: BinaryMask) -> BinaryMask:
    return BinaryMask(mask.bits[::-1, :])


def finger_half(ellipse: Ellipse, mask: BinaryMask) -> FingerSide:
    """The ellipse half (split by the minor axis) with fewer skin pixels holds the fingers."""

    points = mask.coordinates()
    inside = ellipse.contains(points)
    along, _ = ellipse.local_coordinates(points[inside])
    # Orient the major axis toward smaller y ("up").
    if ellipse.major_direction[1] > 0:
        along = -along
    up_count = int(np.count_nonzero(along > _ON_AXIS))
    down_count = int(np.count_nonzero(along < -_ON_AXIS))
    if up_count == down_count:
        return FingerSide("up", True, up_count, down_count)
    side: Literal["up", "down"] = "up" if up_count < down_count else "down"
    return FingerSide(side, False, up_count, down_count)


def orient_hand(
    hand_mask: BinaryMask,
    dilate_factor: float = 0.05,
    erode_factor: float = 0.10,
    margin: int = 2,
) -> OrientedHand:
    """Orientation, vertical adjustment and finger-half flip in one step."""

    theta, _ = hand_orientation(hand_mask, dilate_factor, erode_factor)
    vertical = rotate_to_vertical(hand_mask, theta, margin)
    split = fit_ellipse(vertical.coordinates())
    side = finger_half(split, vertical)
    applied = math.pi / 2.0 - theta
    if side.side == "down":
        vertical = flip_vertical(vertical)
    _, ellipse = hand_orientation(vertical, dilate_factor, erode_factor)
    logger.debug(
        "orientation: theta=%.2f deg, finger side=%s (%d vs %d)",
        math.degrees(theta),
        side.side,
        side.up_count,
        side.down_count,
    )
    return OrientedHand(
        mask=vertical,
        theta_applied=applied,
        ellipse=ellipse,
        flipped=side.side == "down",
        low_confidence=side.low_confidence,
    )


def _snapped(value: float) -> float:
    # Exact quarter turns keep integer sampling positions.
    rounded = round(value)
    return float(rounded) if abs(value - rounded) < 1e-12 else value
