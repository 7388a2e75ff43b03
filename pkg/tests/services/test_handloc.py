from __future__ import annotations

import math

import numpy as np
import pytest

from handdigit.errors import ParameterError
from handdigit.services.edgedetect import EdgeMap
from handdigit.services.geometry import Ellipse, Region, connected_components
from handdigit.services.handloc import (
    crop_to_content,
    hand_orientation,
    locate_comparison_method,
    locate_ellipse_method,
    orient_hand,
    perimeter_ratio,
    rotate_mask,
    rotate_to_vertical,
    thumb_correction,
)
from handdigit.services.skinclass import BinaryMask


def _block(x: int, y: int, width: int, height: int) -> Region:
    ys, xs = np.mgrid[y : y + height, x : x + width]
    return Region(np.column_stack([xs.ravel(), ys.ravel()]))


def _ellipse_mask(ellipse: Ellipse, width: int, height: int) -> BinaryMask:
    ys, xs = np.mgrid[0:height, 0:width]
    inside = ellipse.contains(np.column_stack([xs.ravel(), ys.ravel()]))
    return BinaryMask(inside.reshape(height, width))


def _face_and_cross() -> BinaryMask:
    ys, xs = np.mgrid[0:120, 0:200]
    face = ((xs - 50) / 30.0) ** 2 + ((ys - 60) / 40.0) ** 2 <= 1.0
    dx, dy = np.abs(xs - 150), np.abs(ys - 60)
    cross = ((dx <= 3) & (dy <= 30)) | ((dy <= 3) & (dx <= 30))
    return BinaryMask(face | cross)


def _upright_hand(render, digit: int = 1, **overrides) -> BinaryMask:
    _, truth = render(digit, **overrides)
    mask, _ = connected_components(truth.mask)[0].crop(2)
    return mask


def _narrows_upward(mask: BinaryMask) -> bool:
    """Mean row width of the top quarter is below that of the bottom quarter."""

    widths = mask.bits[mask.bits.any(axis=1)].sum(axis=1)
    quarter = max(1, widths.size // 4)
    return widths[:quarter].mean() < widths[-quarter:].mean()


def test_filled_ellipse_has_full_perimeter_ratio():
    ellipse = Ellipse(cx=40.0, cy=30.0, a=25.0, b=15.0, theta=0.3)
    mask = _ellipse_mask(ellipse, 80, 60)
    assert perimeter_ratio(ellipse, mask, inset=2.0) == 1.0


def test_ellipse_method_separates_solid_face_from_gapped_hand():
    mask = _face_and_cross()
    edges = EdgeMap(np.zeros_like(mask.bits))
    outcome = locate_ellipse_method(mask, edges, 0.8)
    assert outcome.method == "ellipse"
    assert outcome.face is not None
    assert outcome.face.bbox[0] < 100
    assert len(outcome.hands) == 1
    assert outcome.hands[0].bbox[0] >= 100
    assert outcome.scores[0] >= 0.95
    assert outcome.scores[1] < 0.8


def test_ellipse_method_on_empty_mask():
    empty = BinaryMask.empty(10, 10)
    outcome = locate_ellipse_method(empty, EdgeMap(empty.bits), 0.8)
    assert not outcome.found
    assert outcome.face is None


def test_ellipse_method_threshold_must_be_a_fraction():
    empty = BinaryMask.empty(10, 10)
    with pytest.raises(ParameterError):
        locate_ellipse_method(empty, EdgeMap(empty.bits), 1.0)


def test_comparison_near_equal_areas_are_two_hands():
    regions = [_block(0, 0, 40, 25), _block(100, 0, 40, 20)]
    outcome = locate_comparison_method(regions, 200)
    assert outcome.face is None
    assert len(outcome.hands) == 2


def test_comparison_larger_and_higher_region_is_the_face():
    face, hand = _block(0, 0, 60, 50), _block(100, 150, 40, 25)
    outcome = locate_comparison_method([face, hand], 200)
    assert outcome.face is face
    assert outcome.hands == (hand,)


def test_comparison_ratio_of_exactly_one_and_a_half_is_not_two_hands():
    face, hand = _block(0, 0, 50, 30), _block(100, 150, 50, 20)
    outcome = locate_comparison_method([face, hand], 200)
    assert outcome.face is face


def test_comparison_barycenter_wins_over_area():
    low_big, high_small = _block(0, 150, 60, 50), _block(100, 0, 40, 25)
    outcome = locate_comparison_method([low_big, high_small], 200)
    assert outcome.face is high_small
    assert outcome.hands == (low_big,)


def test_comparison_three_regions_keep_two_hands():
    face = _block(80, 0, 50, 60)
    left, right = _block(0, 150, 30, 30), _block(170, 150, 30, 25)
    outcome = locate_comparison_method([face, left, right], 200)
    assert outcome.face is face
    assert outcome.hands == (left, right)


def test_comparison_single_region_is_a_hand():
    region = _block(0, 0, 10, 10)
    outcome = locate_comparison_method([region], 50)
    assert outcome.hands == (region,)
    assert not locate_comparison_method([], 50).found


def test_thumb_correction_removes_a_thin_spur():
    bits = np.zeros((80, 100), dtype=bool)
    bits[10:50, 10:50] = True
    bits[28:32, 50:70] = True
    corrected = thumb_correction(BinaryMask(bits))
    assert corrected.bits.shape == bits.shape
    assert corrected.bits[30, 30]
    assert not corrected.bits[25:36, 62].any()


def test_orientation_of_a_tilted_ellipse():
    mask = _ellipse_mask(Ellipse(80.0, 80.0, 40.0, 15.0, math.radians(30)), 160, 160)
    theta, ellipse = hand_orientation(mask)
    assert math.degrees(theta) == pytest.approx(30.0, abs=2.0)
    assert (ellipse.cx, ellipse.cy) == pytest.approx((80.0, 80.0), abs=1.0)


def test_quarter_turn_is_exact():
    bits = np.zeros((10, 30), dtype=bool)
    bits[3:7, 5:25] = True
    turned = rotate_mask(BinaryMask(bits), math.pi / 2, margin=2)
    assert turned.count == 80
    assert turned.bits.shape == (24, 8)


def test_rotate_to_vertical_stands_a_horizontal_bar_up():
    bits = np.zeros((10, 30), dtype=bool)
    bits[3:7, 5:25] = True
    vertical = rotate_to_vertical(BinaryMask(bits), 0.0, margin=0)
    assert vertical.bits.shape == (20, 4)
    assert vertical.bits.all()


def test_crop_to_content_adds_margin():
    bits = np.zeros((5, 5), dtype=bool)
    bits[2, 3] = True
    cropped = crop_to_content(BinaryMask(bits), 1)
    assert cropped.bits.shape == (3, 3)
    assert cropped.bits[1, 1]


def test_upright_hand_needs_no_turn(render):
    oriented = orient_hand(_upright_hand(render))
    assert not oriented.flipped
    assert abs(math.degrees(oriented.theta_applied)) < 2.0
    assert _narrows_upward(oriented.mask)


def test_hanging_hand_is_flipped_fingers_up(render):
    oriented = orient_hand(_upright_hand(render, rotation=270.0))
    assert oriented.flipped
    assert _narrows_upward(oriented.mask)


def test_tilted_hand_is_turned_back(render):
    oriented = orient_hand(_upright_hand(render, rotation=60.0))
    assert math.degrees(oriented.theta_applied) == pytest.approx(30.0, abs=3.0)
    assert not oriented.flipped
    assert _narrows_upward(oriented.mask)


def _axis_gap(theta: float, degrees: float) -> float:
    gap = (math.degrees(theta) - degrees) % 180.0
    return min(gap, 180.0 - gap)


@pytest.mark.parametrize("digit", range(1, 10))
def test_orientation_follows_the_rendered_rotation(render, digit: int):
    for rotation in (60.0, 75.0, 90.0, 105.0, 120.0):
        mask = _upright_hand(render, digit, rotation=rotation)
        theta, _ = hand_orientation(mask)
        assert _axis_gap(theta, rotation) <= 3.0, rotation
        oriented = orient_hand(mask)
        assert _axis_gap(oriented.ellipse.theta, 90.0) <= 3.0, rotation
