"""Mask geometry: components, morphology, hulls, calipers and ellipse fitting.

Angles follow the on-screen convention: an angle ``t`` names the image
direction ``(cos t, -sin t)`` because image rows grow downward. A vertical
hand with fingers up therefore has orientation 90 degrees.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from scipy import ndimage

from handdigit.errors import DegenerateGeometryError, FitError, ParameterError
from handdigit.services.imagecore import round_half_away
from handdigit.services.skinclass import BinaryMask

logger = logging.getLogger(__name__)

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)
_CIRCLE_TOLERANCE = 1e-6
_PERIMETER_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class Region:
    """An 8-connected set of true pixels, stored as (x, y) rows in row-major order."""

    pixels: np.ndarray

    @property
    def area(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def barycenter(self) -> tuple[float, float]:
        mean = self.pixels.mean(axis=0)
        return float(mean[0]), float(mean[1])

    @property
    def bbox(self) -> tuple[int, int, int, int]:
        """Inclusive (x_min, y_min, x_max, y_max)."""

        low = self.pixels.min(axis=0)
        high = self.pixels.max(axis=0)
        return int(low[0]), int(low[1]), int(high[0]), int(high[1])

    @property
    def anchor(self) -> tuple[int, int]:
        """Topmost-leftmost pixel as (y, x)."""

        return int(self.pixels[0, 1]), int(self.pixels[0, 0])

    def to_mask(self, width: int, height: int) -> BinaryMask:
        bits = np.zeros((height, width), dtype=bool)
        bits[self.pixels[:, 1], self.pixels[:, 0]] = True
        return BinaryMask(bits)

    def crop(self, margin: int = 0) -> tuple[BinaryMask, tuple[int, int]]:
        """Return the region on its own canvas and the canvas origin in the source."""

        x_min, y_min, x_max, y_max = self.bbox
        origin = (x_min - margin, y_min - margin)
        width = x_max - x_min + 1 + 2 * margin
        height = y_max - y_min + 1 + 2 * margin
        bits = np.zeros((height, width), dtype=bool)
        bits[self.pixels[:, 1] - origin[1], self.pixels[:, 0] - origin[0]] = True
        return BinaryMask(bits), origin


@dataclass(frozen=True)
class Ellipse:
    """Ellipse with semi-axes a >= b > 0 and major-axis angle theta in [0, pi)."""

    cx: float
    cy: float
    a: float
    b: float
    theta: float

    @property
    def major_direction(self) -> tuple[float, float]:
        return math.cos(self.theta), -math.sin(self.theta)

    @property
    def minor_direction(self) -> tuple[float, float]:
        return math.sin(self.theta), math.cos(self.theta)

    def points(self, angles: np.ndarray) -> np.ndarray:
        """Sample the boundary at parametric angles, returning (x, y) rows."""

        ux, uy = self.major_direction
        vx, vy = self.minor_direction
        cos_t = self.a * np.cos(angles)
        sin_t = self.b * np.sin(angles)
        return np.column_stack(
            [self.cx + cos_t * ux + sin_t * vx, self.cy + cos_t * uy + sin_t * vy]
        )

    def local_coordinates(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Project points onto the major and minor axes relative to the centre."""

        points = np.asarray(points, dtype=np.float64)
        dx = points[:, 0] - self.cx
        dy = points[:, 1] - self.cy
        ux, uy = self.major_direction
        vx, vy = self.minor_direction
        return dx * ux + dy * uy, dx * vx + dy * vy

    def contains(self, points: np.ndarray) -> np.ndarray:
        along, across = self.local_coordinates(points)
        return (along / self.a) ** 2 + (across / self.b) ** 2 <= 1.0

    def shrunk(self, inset: float) -> "Ellipse":
        return Ellipse(
            self.cx, self.cy, max(1.0, self.a - inset), max(1.0, self.b - inset), self.theta
        )


@dataclass(frozen=True)
class Rect:
    """Oriented rectangle; ``width`` runs along ``angle`` (radians in [0, pi/2))."""

    cx: float
    cy: float
    half_width: float
    half_height: float
    angle: float

    @property
    def width(self) -> float:
        return 2.0 * self.half_width

    @property
    def height(self) -> float:
        return 2.0 * self.half_height

    @property
    def perimeter(self) -> float:
        return 2.0 * (self.width + self.height)

    def corners(self) -> np.ndarray:
        ux, uy = math.cos(self.angle), -math.sin(self.angle)
        vx, vy = math.sin(self.angle), math.cos(self.angle)
        corners = []
        for su, sv in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
            corners.append(
                (
                    self.cx + su * self.half_width * ux + sv * self.half_height * vx,
                    self.cy + su * self.half_width * uy + sv * self.half_height * vy,
                )
            )
        return np.array(corners)


@dataclass(frozen=True)
class StructuringElement:
    """Diamond (|dx|+|dy| <= r) or disk (dx^2+dy^2 <= r^2) neighbourhood."""

    shape: Literal["diamond", "disk"]
    radius: int

    def __post_init__(self) -> None:
        if self.radius < 1:
            raise ParameterError("structuring element radius must be at least 1")
        if self.shape not in ("diamond", "disk"):
            raise ParameterError(f"unknown structuring element shape: {self.shape}")

    @property
    def footprint(self) -> np.ndarray:
        span = np.arange(-self.radius, self.radius + 1)
        dy, dx = np.meshgrid(span, span, indexing="ij")
        if self.shape == "diamond":
            return np.abs(dx) + np.abs(dy) <= self.radius
        return dx * dx + dy * dy <= self.radius * self.radius

    @property
    def offsets(self) -> np.ndarray:
        dy, dx = np.nonzero(self.footprint)
        return np.column_stack([dx - self.radius, dy - self.radius])


def connected_components(mask: BinaryMask) -> list[Region]:
    """8-connected regions sorted by area (desc), then by topmost-leftmost pixel."""

    labels, count = ndimage.label(mask.bits, structure=_EIGHT_CONNECTED)
    if count == 0:
        return []
    ys, xs = np.nonzero(labels)
    owners = labels[ys, xs]
    order = np.argsort(owners, kind="stable")
    sizes = np.bincount(owners, minlength=count + 1)[1:]
    coords = np.column_stack([xs, ys])[order]
    regions = [Region(chunk) for chunk in np.split(coords, np.cumsum(sizes)[:-1])]
    regions.sort(key=lambda region: (-region.area, region.anchor))
    return regions


def morph(mask: BinaryMask, op: Literal["dilate", "erode"], se: StructuringElement) -> BinaryMask:
    """Binary dilation or erosion; erosion treats pixels outside the raster as false."""

    if op == "dilate":
        bits = ndimage.binary_dilation(mask.bits, structure=se.footprint)
    elif op == "erode":
        bits = ndimage.binary_erosion(mask.bits, structure=se.footprint, border_value=0)
    else:
        raise ParameterError(f"unknown morphology operation: {op}")
    return BinaryMask(bits)


def _cross(o: Sequence[float], a: Sequence[float], b: Sequence[float]) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: np.ndarray | Sequence[Sequence[float]]) -> np.ndarray:
    """Monotone-chain hull with positive signed area, collinear points dropped."""

    array = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if array.shape[0] == 0:
        raise DegenerateGeometryError("convex hull of an empty point set")
    unique = np.unique(array, axis=0)
    if unique.shape[0] <= 2:
        return unique
    ordered = [tuple(point) for point in unique]
    lower: list[tuple[float, float]] = []
    for point in ordered:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], point) <= 0:
            lower.pop()
        lower.append(point)
    upper: list[tuple[float, float]] = []
    for point in reversed(ordered):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], point) <= 0:
            upper.pop()
        upper.append(point)
    hull = lower[:-1] + upper[:-1]
    return np.array(hull, dtype=np.float64)


def min_perimeter_rect(hull: np.ndarray) -> Rect:
    """Rotating calipers over hull edges; ties go to the smaller angle."""

    hull = np.asarray(hull, dtype=np.float64).reshape(-1, 2)
    if hull.shape[0] < 2:
        raise DegenerateGeometryError("hull needs at least two vertices")
    best: tuple[float, float, Rect] | None = None
    scale = float(np.ptp(hull, axis=0).max()) or 1.0
    for index in range(hull.shape[0]):
        edge = hull[(index + 1) % hull.shape[0]] - hull[index]
        if not np.any(edge):
            continue
        angle = math.atan2(-edge[1], edge[0]) % (math.pi / 2.0)
        if angle > math.pi / 2.0 - 1e-12:
            angle = 0.0
        ux, uy = math.cos(angle), -math.sin(angle)
        vx, vy = math.sin(angle), math.cos(angle)
        along = hull[:, 0] * ux + hull[:, 1] * uy
        across = hull[:, 0] * vx + hull[:, 1] * vy
        s_min, s_max = float(along.min()), float(along.max())
        t_min, t_max = float(across.min()), float(across.max())
        perimeter = 2.0 * ((s_max - s_min) + (t_max - t_min))
        if best is not None:
            margin = _PERIMETER_TOLERANCE * scale
            if perimeter > best[0] + margin:
                continue
            if abs(perimeter - best[0]) <= margin and angle >= best[1]:
                continue
        s_mid, t_mid = (s_min + s_max) / 2.0, (t_min + t_max) / 2.0
        rect = Rect(
            cx=s_mid * ux + t_mid * vx,
            cy=s_mid * uy + t_mid * vy,
            half_width=(s_max - s_min) / 2.0,
            half_height=(t_max - t_min) / 2.0,
            angle=angle,
        )
        best = (perimeter, angle, rect)
    if best is None or best[2].width <= 1e-12 or best[2].height <= 1e-12:
        raise DegenerateGeometryError("points are collinear; rectangle has zero height")
    return best[2]


def fit_ellipse(points: np.ndarray | Sequence[Sequence[float]]) -> Ellipse:
    """Direct least-squares ellipse fit on centred and scaled coordinates."""

    array = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if array.shape[0] < 5:
        raise FitError(f"need at least 5 points, got {array.shape[0]}")
    mean = array.mean(axis=0)
    centred = array - mean
    spread = math.sqrt(float(np.mean(np.sum(centred * centred, axis=1))))
    if spread == 0.0:
        raise FitError("all points coincide")
    x = centred[:, 0] / spread
    y = centred[:, 1] / spread
    quadratic = np.column_stack([x * x, x * y, y * y])
    linear = np.column_stack([x, y, np.ones_like(x)])
    s1 = quadratic.T @ quadratic
    s2 = quadratic.T @ linear
    s3 = linear.T @ linear
    if np.linalg.cond(s3) > 1e12:
        raise FitError("scatter is rank deficient (collinear points)")
    transfer = -np.linalg.solve(s3, s2.T)
    reduced = s1 + s2 @ transfer
    # Premultiply by the inverse of the 4AC - B^2 constraint matrix.
    reduced = np.vstack([reduced[2] / 2.0, -reduced[1], reduced[0] / 2.0])
    try:
        _, vectors = np.linalg.eig(reduced)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - eig on 3x3 rarely fails
        raise FitError("eigen-decomposition failed") from exc
    vectors = np.real(vectors)
    constraint = 4.0 * vectors[0] * vectors[2] - vectors[1] ** 2
    candidates = np.flatnonzero(constraint > 0)
    if candidates.size == 0:
        raise FitError("no elliptical solution")
    scatter = np.vstack([np.hstack([s1, s2]), np.hstack([s2.T, s3])])
    best_conic: np.ndarray | None = None
    best_cost = math.inf
    for column in candidates:
        quad = vectors[:, column]
        conic = np.concatenate([quad, transfer @ quad])
        cost = float(conic @ scatter @ conic) / float(constraint[column])
        if cost < best_cost:
            best_cost, best_conic = cost, conic
    assert best_conic is not None
    centre, axes, theta = _conic_to_parameters(best_conic)
    return Ellipse(
        cx=float(mean[0] + spread * centre[0]),
        cy=float(mean[1] + spread * centre[1]),
        a=float(spread * axes[0]),
        b=float(spread * axes[1]),
        theta=theta,
    )


def _conic_to_parameters(conic: np.ndarray) -> tuple[np.ndarray, tuple[float, float], float]:
    a, b, c, d, e, f = (float(value) for value in conic)
    denominator = 4.0 * a * c - b * b
    if denominator <= 0:
        raise FitError("conic is not an ellipse")
    x0 = (b * e - 2.0 * c * d) / denominator
    y0 = (b * d - 2.0 * a * e) / denominator
    centre_value = f + (d * x0 + e * y0) / 2.0
    eigenvalues, eigenvectors = np.linalg.eigh(np.array([[a, b / 2.0], [b / 2.0, c]]))
    squared = -centre_value / eigenvalues
    if np.any(squared <= 0) or not np.all(np.isfinite(squared)):
        raise FitError("conic has no real points")
    lengths = np.sqrt(squared)
    major = int(np.argmax(lengths))
    semi_major, semi_minor = float(lengths[major]), float(lengths[1 - major])
    if (semi_major - semi_minor) <= _CIRCLE_TOLERANCE * semi_major:
        theta = 0.0
    else:
        vx, vy = eigenvectors[:, major]
        theta = math.atan2(-vy, vx) % math.pi
        if theta >= math.pi:
            theta = 0.0
    return np.array([x0, y0]), (semi_major, semi_minor), theta


def rasterize_ellipse_perimeter(ellipse: Ellipse) -> np.ndarray:
    """Integer perimeter pixels from 4*ceil(2 pi a) uniform samples, de-duplicated."""

    if ellipse.a < 1 or ellipse.b < 1:
        raise ParameterError("semi-axes must be at least 1")
    samples = 4 * math.ceil(2.0 * math.pi * ellipse.a)
    angles = 2.0 * math.pi * np.arange(samples) / samples
    rounded = round_half_away(ellipse.points(angles)).astype(np.int64)
    seen: dict[tuple[int, int], None] = {}
    for x, y in rounded:
        seen.setdefault((int(x), int(y)), None)
    return np.array(list(seen), dtype=np.int64).reshape(-1, 2)


def pixel_corner_points(mask: BinaryMask) -> np.ndarray:
    """Corners of the leftmost and rightmost true pixel of each row.

    The hull of these points equals the hull of all true pixel squares.
    """

    rows = np.flatnonzero(mask.bits.any(axis=1))
    if rows.size == 0:
        return np.empty((0, 2))
    left = mask.bits[rows].argmax(axis=1)
    right = mask.width - 1 - mask.bits[rows, ::-1].argmax(axis=1)
    points = np.concatenate(
        [
            np.column_stack([left, rows]),
            np.column_stack([left, rows + 1]),
            np.column_stack([right + 1, rows]),
            np.column_stack([right + 1, rows + 1]),
        ]
    )
    return points.astype(np.float64)


def row_extreme_centres(mask: BinaryMask) -> np.ndarray:
    """Centres of the leftmost and rightmost true pixel of each row."""

    rows = np.flatnonzero(mask.bits.any(axis=1))
    if rows.size == 0:
        return np.empty((0, 2))
    left = mask.bits[rows].argmax(axis=1)
    right = mask.width - 1 - mask.bits[rows, ::-1].argmax(axis=1)
    return np.concatenate(
        [np.column_stack([left, rows]), np.column_stack([right, rows])]
    ).astype(np.float64)
