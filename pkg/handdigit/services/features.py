"""Finger histogram, peak detection and the 17-slot feature vector."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Final, Sequence

import numpy as np

from handdigit.errors import ParameterError
from handdigit.services.imagecore import round_half_away
from handdigit.services.skinclass import BinaryMask

logger = logging.getLogger(__name__)

MAX_PEAKS: Final[int] = 5
SLOTS: Final[int] = 4
FEATURE_NAMES: Final[tuple[str, ...]] = (
    ("n",)
    + tuple(f"dist_x{i}" for i in range(1, SLOTS + 1))
    + tuple(f"dist_y{i}" for i in range(1, SLOTS + 1))
    + tuple(f"r_x{i}" for i in range(1, SLOTS + 1))
    + tuple(f"r_y{i}" for i in range(1, SLOTS + 1))
)
FEATURE_COUNT: Final[int] = len(FEATURE_NAMES)


@dataclass(frozen=True, eq=False)
class Histogram:
    """Column counts of finger pixels divided by the hand length."""

    bins: np.ndarray
    hand_length: float

    def __post_init__(self) -> None:
        bins = np.array(self.bins, dtype=np.float64)
        bins.setflags(write=False)
        object.__setattr__(self, "bins", bins)

    @property
    def width(self) -> int:
        return int(self.bins.shape[0])


@dataclass(frozen=True)
class Peak:
    x: int
    y: float


def _zeros() -> tuple[float, ...]:
    return (0.0,) * SLOTS


@dataclass(frozen=True)
class FeatureVector:
    """Peak count followed by successive peak distances and their ratios."""

    n: int = 0
    dist_x: tuple[float, ...] = field(default_factory=_zeros)
    dist_y: tuple[float, ...] = field(default_factory=_zeros)
    r_x: tuple[float, ...] = field(default_factory=_zeros)
    r_y: tuple[float, ...] = field(default_factory=_zeros)

    def __post_init__(self) -> None:
        if not 0 <= self.n <= MAX_PEAKS:
            raise ParameterError(f"peak count {self.n} outside 0..{MAX_PEAKS}")
        for name in ("dist_x", "dist_y", "r_x", "r_y"):
            values = getattr(self, name)
            if len(values) != SLOTS:
                raise ParameterError(f"{name} needs {SLOTS} slots, got {len(values)}")
            object.__setattr__(self, name, tuple(float(v) for v in values))

    def as_array(self) -> np.ndarray:
        return np.array(
            [float(self.n), *self.dist_x, *self.dist_y, *self.r_x, *self.r_y], dtype=np.float64
        )

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "FeatureVector":
        values = [float(v) for v in values]
        if len(values) != FEATURE_COUNT:
            raise ParameterError(f"expected {FEATURE_COUNT} feature values, got {len(values)}")
        n = values[0]
        if n != int(n):
            raise ParameterError(f"peak count must be integral, got {n}")
        return cls(
            n=int(n),
            dist_x=tuple(values[1:5]),
            dist_y=tuple(values[5:9]),
            r_x=tuple(values[9:13]),
            r_y=tuple(values[13:17]),
        )


def project_histogram(finger_mask: BinaryMask, hand_length: float) -> Histogram:
    """Count finger pixels per column, normalized by the hand length."""

    if hand_length <= 0:
        raise ParameterError("hand_length must be positive")
    counts = finger_mask.bits.sum(axis=0).astype(np.float64)
    return Histogram(counts / hand_length, hand_length)


def smooth(histogram: Histogram, window: int) -> Histogram:
    """Centred moving average with edge clamping."""

    if window < 1 or window % 2 == 0:
        raise ParameterError(f"smoothing window must be odd and positive, got {window}")
    if window == 1 or histogram.width == 0:
        return histogram
    half = window // 2
    padded = np.pad(histogram.bins, half, mode="edge")
    kernel = np.full(window, 1.0 / window)
    return Histogram(np.convolve(padded, kernel, mode="valid"), histogram.hand_length)


def default_separation(width: int, factor: float = 0.08) -> int:
    """Minimum peak separation as a fraction of the histogram width."""

    return int(round_half_away(factor * width))


def local_maxima(bins: np.ndarray) -> list[Peak]:
    """Strict maxima over runs of equal values; plateaus report their leftmost bin."""

    padded = np.concatenate([[0.0], np.asarray(bins, dtype=np.float64), [0.0]])
    peaks: list[Peak] = []
    start = 1
    last = padded.shape[0] - 1
    while start < last:
        end = start
        while end + 1 < last and padded[end + 1] == padded[start]:
            end += 1
        value = padded[start]
        if value > padded[start - 1] and value > padded[end + 1]:
            peaks.append(Peak(start - 1, float(value)))
        start = end + 1
    return peaks


def detect_peaks(
    histogram: Histogram,
    min_rel_amplitude: float = 0.1,
    min_separation: int | None = None,
) -> list[Peak]:
    """Significant peaks, at most five, sorted by x."""

    if not 0.0 < min_rel_amplitude < 1.0:
        raise ParameterError("min_rel_amplitude must lie in (0, 1)")
    if histogram.width == 0:
        return []
    if min_separation is None:
        min_separation = default_separation(histogram.width)
    floor = min_rel_amplitude * float(histogram.bins.max())
    candidates = [peak for peak in local_maxima(histogram.bins) if peak.y >= floor]
    kept: list[Peak] = []
    for peak in sorted(candidates, key=lambda p: (-p.y, p.x)):
        if all(abs(peak.x - other.x) > min_separation for other in kept):
            kept.append(peak)
        if len(kept) == MAX_PEAKS:
            break
    return sorted(kept, key=lambda p: p.x)


def feature_vector(peaks: Sequence[Peak]) -> FeatureVector:
    """Distances between successive peaks and ratios of successive distances."""

    if len(peaks) > MAX_PEAKS:
        raise ParameterError(f"{len(peaks)} peaks exceed the cap of {MAX_PEAKS}")
    dist_x = [0.0] * SLOTS
    dist_y = [0.0] * SLOTS
    for i in range(len(peaks) - 1):
        dist_x[i] = float(abs(peaks[i].x - peaks[i + 1].x))
        dist_y[i] = abs(peaks[i].y - peaks[i + 1].y)
    return FeatureVector(
        n=len(peaks),
        dist_x=tuple(dist_x),
        dist_y=tuple(dist_y),
        r_x=_ratios(dist_x),
        r_y=_ratios(dist_y),
    )


def _ratios(distances: Sequence[float]) -> tuple[float, ...]:
    ratios = [0.0] * SLOTS
    for i in range(SLOTS - 1):
        if distances[i] != 0.0 and distances[i + 1] != 0.0:
            ratios[i] = distances[i] / distances[i + 1]
    return tuple(ratios)
