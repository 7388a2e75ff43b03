from __future__ import annotations

import math

import numpy as np
import pytest

from handdigit.errors import DegenerateGeometryError, FitError, ParameterError
from handdigit.services.geometry import (
    Ellipse,
    Rect,
    StructuringElement,
    connected_components,
    convex_hull,
    fit_ellipse,
    min_perimeter_rect,
    morph,
    pixel_corner_points,
    rasterize_ellipse_perimeter,
    row_extreme_centres,
)
from handdigit.services.skinclass import BinaryMask


def _signed_area(polygon: np.ndarray) -> float:
    x, y = polygon[:, 0], polygon[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def test_components_are_eight_connected_and_sorted(mask_from):
    mask = mask_from(
        "#.....",
        ".#..##",
        "....##",
        "###...",
    )
    regions = connected_components(mask)
    assert [region.area for region in regions] == [4, 3, 2]
    # the diagonal pair forms one region
    assert regions[2].anchor == (0, 0)
    assert regions[0].bbox == (4, 1, 5, 2)
    assert regions[1].barycenter == pytest.approx((1.0, 3.0))


def test_equal_areas_order_by_topmost_leftmost_pixel(mask_from):
    mask = mask_from(
        "....#",
        "#....",
    )
    assert [region.anchor for region in connected_components(mask)] == [(0, 4), (1, 0)]


def test_empty_mask_has_no_components():
    assert connected_components(BinaryMask.empty(3, 3)) == []


def test_region_crop_keeps_a_margin(mask_from):
    mask = mask_from(
        ".....",
        "..##.",
        ".....",
    )
    region = connected_components(mask)[0]
    cropped, origin = region.crop(1)
    assert origin == (1, 0)
    assert cropped.bits.tolist() == [
        [False, False, False, False],
        [False, True, True, False],
        [False, False, False, False],
    ]


@pytest.mark.parametrize(
    ("shape", "radius", "size"),
    [("diamond", 1, 5), ("diamond", 2, 13), ("disk", 2, 13), ("disk", 3, 29)],
)
def test_structuring_element_sizes(shape: str, radius: int, size: int):
    se = StructuringElement(shape, radius)
    assert int(se.footprint.sum()) == size
    assert se.offsets.shape == (size, 2)


def test_structuring_element_needs_positive_radius():
    with pytest.raises(ParameterError):
        StructuringElement("disk", 0)


def test_dilation_of_a_point_is_the_element():
    bits = np.zeros((7, 7), dtype=bool)
    bits[3, 3] = True
    dilated = morph(BinaryMask(bits), "dilate", StructuringElement("diamond", 2))
    assert np.array_equal(dilated.bits[1:6, 1:6], StructuringElement("diamond", 2).footprint)
    assert dilated.count == 13


def test_erosion_treats_outside_as_background():
    full = BinaryMask(np.ones((5, 5), dtype=bool))
    eroded = morph(full, "erode", StructuringElement("diamond", 1))
    assert eroded.count == 9
    assert not eroded.bits[0].any()


def test_convex_hull_drops_interior_and_collinear_points():
    points = [(0, 0), (2, 0), (4, 0), (4, 4), (0, 4), (2, 2), (1, 3)]
    hull = convex_hull(points)
    assert {tuple(p) for p in hull.tolist()} == {(0, 0), (4, 0), (4, 4), (0, 4)}
    assert _signed_area(hull) > 0


def test_convex_hull_of_nothing_is_degenerate():
    with pytest.raises(DegenerateGeometryError):
        convex_hull(np.empty((0, 2)))


def test_axis_aligned_rectangle_is_its_own_bound():
    hull = convex_hull([(0, 0), (40, 0), (40, 100), (0, 100)])
    rect = min_perimeter_rect(hull)
    assert rect.angle == 0.0
    assert {round(rect.width, 9), round(rect.height, 9)} == {40.0, 100.0}
    assert (rect.cx, rect.cy) == pytest.approx((20.0, 50.0))


def test_diamond_bound_is_rotated_by_45_degrees():
    hull = convex_hull([(1, 0), (2, 1), (1, 2), (0, 1)])
    rect = min_perimeter_rect(hull)
    assert rect.angle == pytest.approx(math.pi / 4)
    assert rect.width == pytest.approx(math.sqrt(2))
    assert rect.height == pytest.approx(math.sqrt(2))
    assert rect.perimeter == pytest.approx(4 * math.sqrt(2))


def test_collinear_points_have_no_rectangle():
    with pytest.raises(DegenerateGeometryError):
        min_perimeter_rect(convex_hull([(0, 0), (1, 1), (2, 2)]))


def test_fit_recovers_an_exact_ellipse():
    truth = Ellipse(cx=50.0, cy=40.0, a=20.0, b=10.0, theta=math.radians(30))
    points = truth.points(np.linspace(0, 2 * math.pi, 40, endpoint=False))
    fitted = fit_ellipse(points)
    assert (fitted.cx, fitted.cy) == pytest.approx((50.0, 40.0), abs=1e-6)
    assert (fitted.a, fitted.b) == pytest.approx((20.0, 10.0), abs=1e-6)
    assert fitted.theta == pytest.approx(math.radians(30), abs=1e-6)


def test_fit_of_a_vertical_ellipse_points_up():
    truth = Ellipse(cx=0.0, cy=0.0, a=30.0, b=12.0, theta=math.pi / 2)
    fitted = fit_ellipse(truth.points(np.linspace(0, 2 * math.pi, 24, endpoint=False)))
    assert fitted.theta == pytest.approx(math.pi / 2, abs=1e-6)
    assert fitted.major_direction == pytest.approx((0.0, -1.0), abs=1e-6)


def test_fit_of_a_circle_reports_zero_angle():
    circle = Ellipse(cx=5.0, cy=5.0, a=4.0, b=4.0, theta=0.0)
    fitted = fit_ellipse(circle.points(np.linspace(0, 2 * math.pi, 16, endpoint=False)))
    assert fitted.theta == 0.0
    assert fitted.a == pytest.approx(4.0)


def test_fit_needs_five_points():
    with pytest.raises(FitError):
        fit_ellipse([(0, 0), (1, 0), (0, 1), (1, 1)])


def test_fit_rejects_collinear_points():
    with pytest.raises(FitError):
        fit_ellipse([(i, 2 * i) for i in range(10)])


def test_rasterized_perimeter_hugs_the_circle():
    pixels = rasterize_ellipse_perimeter(Ellipse(20.0, 20.0, 10.0, 10.0, 0.0))
    distances = np.hypot(pixels[:, 0] - 20, pixels[:, 1] - 20)
    assert distances.min() >= 9.2 and distances.max() <= 10.8
    assert len({tuple(p) for p in pixels.tolist()}) == len(pixels)


def test_rasterization_needs_unit_axes():
    with pytest.raises(ParameterError):
        rasterize_ellipse_perimeter(Ellipse(0.0, 0.0, 5.0, 0.5, 0.0))


def test_corner_points_bound_pixel_squares(mask_from):
    mask = mask_from(
        ".##",
        ".#.",
    )
    rect = min_perimeter_rect(convex_hull(pixel_corner_points(mask)))
    assert rect.perimeter == pytest.approx(8.0)
    assert row_extreme_centres(mask).tolist() == [[1, 0], [1, 1], [2, 0], [1, 1]]


def _angle_gap(theta: float, expected: float) -> float:
    gap = (theta - expected) % math.pi
    return min(gap, math.pi - gap)


def test_fit_recovers_random_ellipses():
    rng = np.random.default_rng(12)
    angles = np.linspace(0, 2 * math.pi, 100, endpoint=False)
    for _ in range(50):
        b = float(rng.uniform(4.0, 20.0))
        truth = Ellipse(
            cx=float(rng.uniform(-50.0, 150.0)),
            cy=float(rng.uniform(-50.0, 150.0)),
            a=b * float(rng.uniform(1.3, 3.0)),
            b=b,
            theta=float(rng.uniform(0.0, math.pi)),
        )
        fitted = fit_ellipse(truth.points(angles))
        assert (fitted.cx, fitted.cy) == pytest.approx((truth.cx, truth.cy), abs=0.5)
        assert (fitted.a, fitted.b) == pytest.approx((truth.a, truth.b), rel=0.01)
        assert _angle_gap(fitted.theta, truth.theta) <= math.radians(1.0)


def test_fit_follows_translation_and_ignores_point_order():
    rng = np.random.default_rng(13)
    points = Ellipse(10.0, 20.0, 25.0, 9.0, 1.1).points(np.linspace(0, 6.0, 37))
    points = points + rng.normal(0.0, 0.3, size=points.shape)
    base = fit_ellipse(points)
    for dx, dy in [(5.0, -3.0), (120.0, 80.0), (-40.5, 0.25)]:
        moved = fit_ellipse(points[rng.permutation(len(points))] + (dx, dy))
        assert (moved.cx - dx, moved.cy - dy) == pytest.approx((base.cx, base.cy), abs=1e-6)
        assert (moved.a, moved.b) == pytest.approx((base.a, base.b), abs=1e-6)
        assert _angle_gap(moved.theta, base.theta) <= 1e-6


def _swept_perimeter(hull: np.ndarray) -> tuple[float, float]:
    """Smallest bounding-box perimeter over a 0.1 degree sweep, with its angle."""

    best = (math.inf, 0.0)
    for tenth in range(900):
        angle = math.radians(tenth / 10)
        along = hull[:, 0] * math.cos(angle) - hull[:, 1] * math.sin(angle)
        across = hull[:, 0] * math.sin(angle) + hull[:, 1] * math.cos(angle)
        perimeter = 2.0 * (np.ptp(along) + np.ptp(across))
        if perimeter < best[0]:
            best = (float(perimeter), angle)
    return best


def test_rotated_rectangles_match_an_angle_sweep():
    rng = np.random.default_rng(14)
    for _ in range(30):
        half_w, half_h = float(rng.uniform(3.0, 30.0)), float(rng.uniform(3.0, 30.0))
        truth = Rect(
            cx=float(rng.uniform(-20.0, 20.0)),
            cy=float(rng.uniform(-20.0, 20.0)),
            half_width=half_w,
            half_height=half_h,
            angle=float(rng.uniform(0.0, math.pi / 2)),
        )
        corners = truth.corners()
        u = np.array([math.cos(truth.angle), -math.sin(truth.angle)])
        v = np.array([math.sin(truth.angle), math.cos(truth.angle)])
        local = rng.uniform(-0.9, 0.9, size=(10, 2)) * (half_w, half_h)
        inside = (truth.cx, truth.cy) + local[:, :1] * u + local[:, 1:] * v
        rect = min_perimeter_rect(convex_hull(np.vstack([corners, inside])))
        swept, _ = _swept_perimeter(corners)
        assert rect.perimeter <= swept + 1e-9
        assert rect.perimeter == pytest.approx(truth.perimeter, rel=1e-9)
        assert sorted((rect.width, rect.height)) == pytest.approx(
            sorted((truth.width, truth.height)), rel=1e-9
        )


def test_thirty_degree_rectangle_from_its_corners():
    truth = Rect(cx=0.0, cy=0.0, half_width=5.0, half_height=2.0, angle=math.radians(30))
    rect = min_perimeter_rect(convex_hull(truth.corners()))
    _, swept_angle = _swept_perimeter(truth.corners())
    assert (rect.width, rect.height) == pytest.approx((10.0, 4.0))
    assert math.degrees(rect.angle) == pytest.approx(30.0, abs=0.5)
    assert math.degrees(swept_angle) == pytest.approx(30.0, abs=0.1)


@pytest.mark.parametrize("shape", ["diamond", "disk"])
def test_erosion_is_dual_to_dilation_of_the_complement(shape: str):
    rng = np.random.default_rng(15)
    for trial in range(100):
        se = StructuringElement(shape, 1 + trial % 3)
        bits = rng.random((32, 32)) < rng.uniform(0.3, 0.8)
        eroded = morph(BinaryMask(bits), "erode", se).bits
        dual = ~morph(BinaryMask(~bits), "dilate", se).bits
        r = se.radius
        assert np.array_equal(eroded[r:-r, r:-r], dual[r:-r, r:-r])
        assert not (eroded & ~bits).any()
        assert not (bits & ~morph(BinaryMask(bits), "dilate", se).bits).any()
