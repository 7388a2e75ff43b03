"""Crisp and fuzzy (zero-order Takagi-Sugeno) skin classification on Cb/Cr."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from handdigit.services.imagecore import ImageYCbCr

logger = logging.getLogger(__name__)

SkinMode = Literal["crisp", "fuzzy"]

_LEVELS = np.arange(256, dtype=np.float64)


class CrispSkinRange(BaseModel):
    """Inclusive Cb/Cr box classifying a pixel as skin."""

    model_config = ConfigDict(frozen=True)

    cb_min: int = Field(default=77, ge=0, le=255)
    cb_max: int = Field(default=127, ge=0, le=255)
    cr_min: int = Field(default=139, ge=0, le=255)
    cr_max: int = Field(default=210, ge=0, le=255)

    @model_validator(mode="after")
    def _check_order(self) -> "CrispSkinRange":
        if self.cb_min > self.cb_max or self.cr_min > self.cr_max:
            raise ValueError("range minimum exceeds maximum")
        return self

    def contains(self, cb: float, cr: float) -> bool:
        return self.cb_min <= cb <= self.cb_max and self.cr_min <= cr <= self.cr_max


class Trapezoid(BaseModel):
    """Trapezoidal membership function with breakpoints a <= b <= c <= d."""

    model_config = ConfigDict(frozen=True)

    a: float
    b: float
    c: float
    d: float

    @model_validator(mode="after")
    def _check_breakpoints(self) -> "Trapezoid":
        if not (self.a <= self.b <= self.c <= self.d):
            raise ValueError(
                f"breakpoints out of order: {self.a}, {self.b}, {self.c}, {self.d}"
            )
        return self


class FuzzyInput(BaseModel):
    """The dark/medium/light partition of one chroma channel."""

    model_config = ConfigDict(frozen=True)

    dark: Trapezoid
    medium: Trapezoid
    light: Trapezoid

    @property
    def terms(self) -> tuple[Trapezoid, Trapezoid, Trapezoid]:
        return (self.dark, self.medium, self.light)

    @model_validator(mode="after")
    def _check_coverage(self) -> "FuzzyInput":
        support = np.max([membership(_LEVELS, term) for term in self.terms], axis=0)
        uncovered = np.flatnonzero(support <= 0.0)
        if uncovered.size:
            raise ValueError(f"memberships leave value {int(uncovered[0])} uncovered")
        return self


def _default_cb() -> FuzzyInput:
    return FuzzyInput(
        dark=Trapezoid(a=0, b=0, c=67, d=77),
        medium=Trapezoid(a=67, b=77, c=127, d=137),
        light=Trapezoid(a=127, b=137, c=255, d=255),
    )


def _default_cr() -> FuzzyInput:
    return FuzzyInput(
        dark=Trapezoid(a=0, b=0, c=129, d=139),
        medium=Trapezoid(a=129, b=139, c=210, d=220),
        light=Trapezoid(a=210, b=220, c=255, d=255),
    )


def _default_rules() -> tuple[tuple[float, ...], ...]:
    return ((0.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 0.0))


class FuzzySkinSystem(BaseModel):
    """Zero-order Sugeno system: rules[i][j] is the consequent for Cb term i and Cr term j."""

    model_config = ConfigDict(frozen=True)

    cb: FuzzyInput = Field(default_factory=_default_cb)
    cr: FuzzyInput = Field(default_factory=_default_cr)
    rules: tuple[tuple[float, ...], ...] = Field(
        default_factory=_default_rules,
        description="3x3 consequents indexed [cb term][cr term], terms ordered dark/medium/light",
    )
    threshold: float = Field(default=0.5, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_rules(self) -> "FuzzySkinSystem":
        if len(self.rules) != 3 or any(len(row) != 3 for row in self.rules):
            raise ValueError("rule table must be 3x3")
        if any(not 0.0 <= value <= 1.0 for row in self.rules for value in row):
            raise ValueError("rule consequents must lie in [0, 1]")
        return self


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Row-major boolean raster; True marks a foreground (skin) pixel."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        if self.bits.ndim != 2:
            raise ValueError("mask bits must have shape (height, width)")
        bits = np.ascontiguousarray(self.bits, dtype=bool)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def width(self) -> int:
        return int(self.bits.shape[1])

    @property
    def height(self) -> int:
        return int(self.bits.shape[0])

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def coordinates(self) -> np.ndarray:
        """Return the (x, y) coordinates of true pixels in row-major order."""

        ys, xs = np.nonzero(self.bits)
        return np.column_stack([xs, ys])

    def to_pgm_pixels(self) -> np.ndarray:
        return np.where(self.bits, 255, 0).astype(np.uint8)

    @classmethod
    def from_gray(cls, pixels: np.ndarray) -> "BinaryMask":
        return cls(np.asarray(pixels) > 127)

    @classmethod
    def empty(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))


@dataclass(frozen=True)
class MaskAgreement:
    """Pixel recall and precision of a predicted mask against ground truth."""

    recall: float | None
    precision: float | None


def classify_crisp(cb: float, cr: float, skin_range: CrispSkinRange | None = None) -> bool:
    """Return True when (cb, cr) lies inside the inclusive skin box."""

    skin_range = skin_range or CrispSkinRange()
    return skin_range.contains(cb, cr)


def membership(x: float | np.ndarray, trap: Trapezoid) -> float | np.ndarray:
    """Evaluate a trapezoidal membership function (vectorized over x)."""

    values = np.asarray(x, dtype=np.float64)
    rising = (values - trap.a) / (trap.b - trap.a) if trap.b > trap.a else np.ones_like(values)
    falling = (trap.d - values) / (trap.d - trap.c) if trap.d > trap.c else np.ones_like(values)
    degree = np.clip(np.minimum(rising, falling), 0.0, 1.0)
    degree = np.where((values >= trap.b) & (values <= trap.c), 1.0, degree)
    degree = np.where((values < trap.a) | (values > trap.d), 0.0, degree)
    if degree.ndim == 0:
        return float(degree)
    return degree


def fuzzy_scores(cb: np.ndarray, cr: np.ndarray, system: FuzzySkinSystem) -> np.ndarray:
    """Weighted-average Sugeno output for arrays of chroma values."""

    cb = np.asarray(cb, dtype=np.float64)
    cr = np.asarray(cr, dtype=np.float64)
    cb_degrees = [np.asarray(membership(cb, term)) for term in system.cb.terms]
    cr_degrees = [np.asarray(membership(cr, term)) for term in system.cr.terms]
    weighted = np.zeros(np.broadcast(cb, cr).shape)
    total = np.zeros_like(weighted)
    for i, cb_degree in enumerate(cb_degrees):
        for j, cr_degree in enumerate(cr_degrees):
            strength = np.minimum(cb_degree, cr_degree)
            weighted = weighted + strength * system.rules[i][j]
            total = total + strength
    with np.errstate(invalid="ignore", divide="ignore"):
        scores = np.where(total > 0.0, weighted / np.where(total > 0.0, total, 1.0), 0.0)
    return scores


def classify_fuzzy(
    cb: float, cr: float, system: FuzzySkinSystem | None = None
) -> tuple[float, bool]:
    """Return the fuzzy skin score of (cb, cr) and its thresholded decision."""

    system = system or FuzzySkinSystem()
    score = float(fuzzy_scores(np.array(cb), np.array(cr), system))
    return score, score >= system.threshold


@lru_cache(maxsize=16)
def _decision_table(
    mode: SkinMode, skin_range: CrispSkinRange, system: FuzzySkinSystem
) -> np.ndarray:
    # Every (Cb, Cr) pair is classified once; masks are table lookups.
    cb, cr = np.meshgrid(_LEVELS, _LEVELS, indexing="ij")
    if mode == "crisp":
        table = (
            (cb >= skin_range.cb_min)
            & (cb <= skin_range.cb_max)
            & (cr >= skin_range.cr_min)
            & (cr <= skin_range.cr_max)
        )
    else:
        table = fuzzy_scores(cb, cr, system) >= system.threshold
    table.setflags(write=False)
    return table


def skin_mask(
    image: ImageYCbCr,
    mode: SkinMode = "fuzzy",
    skin_range: CrispSkinRange | None = None,
    system: FuzzySkinSystem | None = None,
) -> BinaryMask:
    """Classify every pixel of a YCbCr image as skin or non-skin."""

    table = _decision_table(mode, skin_range or CrispSkinRange(), system or FuzzySkinSystem())
    mask = BinaryMask(table[image.cb, image.cr])
    logger.debug("skin mask (%s): %d of %d pixels", mode, mask.count, mask.bits.size)
    return mask


def mask_agreement(mask: BinaryMask, truth: BinaryMask) -> MaskAgreement:
    """Compare a predicted mask with a ground-truth mask of the same size."""

    if mask.bits.shape != truth.bits.shape:
        raise ValueError("masks differ in size")
    hits = int(np.count_nonzero(mask.bits & truth.bits))
    truth_count = truth.count
    predicted_count = mask.count
    return MaskAgreement(
        recall=hits / truth_count if truth_count else None,
        precision=hits / predicted_count if predicted_count else None,
    )


def detection_ratio(
    masks: Sequence[BinaryMask], truths: Sequence[BinaryMask], min_coverage: float = 0.9
) -> float:
    """Fraction of images whose true skin is recovered at least ``min_coverage``."""

    if len(masks) != len(truths):
        raise ValueError("masks and truths differ in length")
    if not masks:
        raise ValueError("no masks to score")
    detected = 0
    for mask, truth in zip(masks, truths):
        recall = mask_agreement(mask, truth).recall
        if recall is not None and recall >= min_coverage:
            detected += 1
    return detected / len(masks)
