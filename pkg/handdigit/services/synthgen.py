"""Parametric renderer of labelled synthetic hand images."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Final

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from handdigit.errors import ParameterError
from handdigit.schemas import FaceSpec, HandPose, ManifestEntry
from handdigit.services import storage
from handdigit.services.imagecore import ImageRGB, encode_ppm, ycbcr_to_rgb
from handdigit.services.skinclass import BinaryMask, CrispSkinRange

logger = logging.getLogger(__name__)

SKIN_LUMA: Final[float] = 150.0
BACKGROUND_LUMA: Final[float] = 90.0
FINGER_WIDTH: Final[float] = 0.07
THUMB_WIDTH: Final[float] = 0.08
THUMB_BASE: Final[tuple[float, float]] = (-0.19, -0.02)
THUMB_ANGLE: Final[float] = 40.0
THUMB_LENGTH: Final[float] = 0.30
PALM_HALF_WIDTH: Final[float] = 0.22
PALM_HALF_LENGTH: Final[float] = 0.248
WRIST_HALF_WIDTH: Final[float] = 0.13
WRIST_LENGTH: Final[float] = 0.10
FINGER_SINK: Final[float] = 0.03
FACE_AXES: Final[tuple[float, float]] = (0.38, 0.50)
FACE_HEIGHT: Final[float] = 0.32
# Largest distance from the palm centre reached by any part, in hand lengths.
_REACH: Final[float] = 0.70


@dataclass(frozen=True)
class FingerLayout:
    offsets: tuple[float, ...]
    lengths: tuple[float, ...]
    thumb: bool

    @property
    def count(self) -> int:
        return len(self.offsets) + int(self.thumb)


# Lateral offsets and lengths in hand lengths, measured from the palm top edge.
LAYOUTS: Final[dict[int, FingerLayout]] = {
    1: FingerLayout((0.0,), (0.40,), False),
    2: FingerLayout((-0.055, 0.055), (0.40, 0.40), False),
    3: FingerLayout((-0.055, 0.055), (0.38, 0.40), True),
    4: FingerLayout((-0.165, -0.055, 0.055, 0.165), (0.33, 0.40, 0.40, 0.33), False),
    5: FingerLayout((-0.165, -0.055, 0.055, 0.165), (0.33, 0.40, 0.40, 0.33), True),
    6: FingerLayout((-0.11, 0.0, 0.11), (0.36, 0.40, 0.36), False),
    7: FingerLayout((-0.19, 0.0, 0.19), (0.36, 0.40, 0.36), False),
    8: FingerLayout((-0.11, 0.0, 0.11), (0.28, 0.40, 0.28), False),
    9: FingerLayout((-0.19, 0.0, 0.19), (0.28, 0.40, 0.28), False),
}


class PoseRanges(BaseModel):
    """Sampling ranges for :func:`sample_pose`; pairs are inclusive (min, max)."""

    model_config = ConfigDict(frozen=True)

    scale: tuple[float, float] = (110.0, 150.0)
    rotation: tuple[float, float] = (60.0, 120.0)
    jitter: float = Field(default=2.0, ge=0.0)
    center_jitter: int = Field(default=10, ge=0)
    skin_cb: tuple[int, int] = (90, 115)
    skin_cr: tuple[int, int] = (150, 185)
    background_cb: tuple[int, int] = (140, 170)
    background_cr: tuple[int, int] = (95, 120)
    canvas: int = Field(default=256, ge=16)
    noise: float = Field(default=0.0, ge=0.0)
    face: bool = False

    @model_validator(mode="after")
    def _check_satisfiable(self) -> "PoseRanges":
        for name in ("scale", "rotation", "skin_cb", "skin_cr", "background_cb", "background_cr"):
            low, high = getattr(self, name)
            if low > high:
                raise ValueError(f"{name} range is empty: {low} > {high}")
        if self.scale[0] <= 0:
            raise ValueError("scale must be positive")
        box = CrispSkinRange()
        if not (
            box.contains(self.skin_cb[0], self.skin_cr[0])
            and box.contains(self.skin_cb[1], self.skin_cr[1])
        ):
            raise ValueError("skin chroma range leaves the skin box")
        cb_clear = self.background_cb[0] > box.cb_max or self.background_cb[1] < box.cb_min
        cr_clear = self.background_cr[0] > box.cr_max or self.background_cr[1] < box.cr_min
        if not (cb_clear or cr_clear):
            raise ValueError("background chroma range overlaps the skin box")
        if _REACH * self.scale[1] + self.center_jitter > self.canvas / 2.0:
            raise ValueError(
                f"a hand of length {self.scale[1]} does not fit a {self.canvas}px canvas"
            )
        if self.face and FACE_AXES[1] * self.scale[1] > round(FACE_HEIGHT * self.canvas):
            raise ValueError(f"a face for hand length {self.scale[1]} leaves the canvas")
        return self


@dataclass(frozen=True)
class GroundTruth:
    """What the renderer drew, in image coordinates."""

    digit: int
    mask: BinaryMask
    palm_center: tuple[float, float]
    palm_radius: float
    fingers: tuple[tuple[tuple[float, float], tuple[float, float]], ...]
    orientation: float
    face_mask: BinaryMask | None = None

    @property
    def finger_count(self) -> int:
        return len(self.fingers)

    @property
    def skin(self) -> BinaryMask:
        """Hand and face pixels together."""

        if self.face_mask is None:
            return self.mask
        return BinaryMask(self.mask.bits | self.face_mask.bits)


def _palm_top(u: float) -> float:
    ratio = min(1.0, abs(u) / PALM_HALF_WIDTH)
    return PALM_HALF_LENGTH * math.sqrt(1.0 - ratio * ratio)


def _finger_segments(pose: HandPose) -> list[tuple[np.ndarray, np.ndarray, float]]:
    """Finger (and thumb) axes as (base, tip, half width) in hand-length units."""

    layout = LAYOUTS[pose.digit]
    jitter = pose.jitter or (0.0,) * layout.count
    if len(jitter) != layout.count:
        raise ParameterError(f"digit {pose.digit} needs {layout.count} jitter values")
    segments = []
    for offset, length, tilt in zip(layout.offsets, layout.lengths, jitter):
        top = _palm_top(offset)
        base = np.array([offset, top - FINGER_SINK])
        reach = length + FINGER_SINK
        angle = math.radians(tilt)
        tip = base + reach * np.array([math.sin(angle), math.cos(angle)])
        segments.append((base, tip, FINGER_WIDTH / 2.0))
    if layout.thumb:
        angle = math.radians(THUMB_ANGLE + jitter[-1])
        base = np.array(THUMB_BASE)
        tip = base + THUMB_LENGTH * np.array([-math.cos(angle), math.sin(angle)])
        segments.append((base, tip, THUMB_WIDTH / 2.0))
    return segments


def _frame(pose: HandPose) -> tuple[np.ndarray, np.ndarray]:
    # Lateral (u) and axial (v, toward the fingertips) unit vectors in image space.
    rho = math.radians(pose.rotation)
    return np.array([math.sin(rho), math.cos(rho)]), np.array([math.cos(rho), -math.sin(rho)])


def _to_image(pose: HandPose, local: np.ndarray) -> np.ndarray:
    lateral, axial = _frame(pose)
    local = np.atleast_2d(local) * pose.scale
    return np.asarray(pose.center) + local[:, :1] * lateral + local[:, 1:2] * axial


def _capsule(u: np.ndarray, v: np.ndarray, base: np.ndarray, tip: np.ndarray, radius: float):
    direction = tip - base
    span = float(direction @ direction)
    t = np.clip(((u - base[0]) * direction[0] + (v - base[1]) * direction[1]) / span, 0.0, 1.0)
    du = u - (base[0] + t * direction[0])
    dv = v - (base[1] + t * direction[1])
    return du * du + dv * dv <= radius * radius


def _check_fits(pose: HandPose, segments: list[tuple[np.ndarray, np.ndarray, float]]) -> None:
    angles = np.linspace(0.0, 2.0 * math.pi, 72, endpoint=False)
    circle = np.column_stack([np.cos(angles), np.sin(angles)])
    outline = [circle * np.array([PALM_HALF_WIDTH, PALM_HALF_LENGTH])]
    bottom = -PALM_HALF_LENGTH - WRIST_LENGTH
    outline.append(np.array([[-WRIST_HALF_WIDTH, bottom], [WRIST_HALF_WIDTH, bottom]]))
    for base, tip, radius in segments:
        for point in (base, tip):
            outline.append(point + radius * circle)
    points = _to_image(pose, np.vstack(outline))
    width, height = pose.canvas
    low = points.min(axis=0)
    high = points.max(axis=0)
    if low[0] < 0 or low[1] < 0 or high[0] > width - 1 or high[1] > height - 1:
        raise ParameterError(f"hand for digit {pose.digit} leaves the canvas")


def render_hand(pose: HandPose) -> tuple[ImageRGB, GroundTruth]:
    """Draw the hand with hard edges on a flat background."""

    segments = _finger_segments(pose)
    _check_fits(pose, segments)
    width, height = pose.canvas
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    lateral, axial = _frame(pose)
    dx = (xs - pose.center[0]) / pose.scale
    dy = (ys - pose.center[1]) / pose.scale
    u = dx * lateral[0] + dy * lateral[1]
    v = dx * axial[0] + dy * axial[1]

    hand = (u / PALM_HALF_WIDTH) ** 2 + (v / PALM_HALF_LENGTH) ** 2 <= 1.0
    hand |= (
        (np.abs(u) <= WRIST_HALF_WIDTH)
        & (v >= -PALM_HALF_LENGTH - WRIST_LENGTH)
        & (v <= -PALM_HALF_LENGTH / 2.0)
    )
    for base, tip, radius in segments:
        hand |= _capsule(u, v, base, tip, radius)

    face_bits = None
    if pose.face is not None:
        (fx, fy), (fa, fb) = pose.face.center, pose.face.axes
        face_bits = ((xs - fx) / fa) ** 2 + ((ys - fy) / fb) ** 2 <= 1.0
        face_bits &= ~hand

    skin = hand if face_bits is None else hand | face_bits
    cb = np.where(skin, float(pose.skin_cb), float(pose.background_cb))
    cr = np.where(skin, float(pose.skin_cr), float(pose.background_cr))
    if pose.noise > 0:
        rng = np.random.Generator(np.random.PCG64(pose.noise_seed))
        cb = np.clip(cb + rng.normal(0.0, pose.noise, cb.shape), 0, 255)
        cr = np.clip(cr + rng.normal(0.0, pose.noise, cr.shape), 0, 255)
    luma = np.where(skin, SKIN_LUMA, BACKGROUND_LUMA)
    image = ImageRGB(ycbcr_to_rgb(luma, cb, cr))

    fingers = tuple(
        (tuple(_to_image(pose, base)[0]), tuple(_to_image(pose, tip)[0]))
        for base, tip, _ in segments
    )
    truth = GroundTruth(
        digit=pose.digit,
        mask=BinaryMask(hand),
        palm_center=(float(pose.center[0]), float(pose.center[1])),
        palm_radius=0.5 * math.hypot(2 * PALM_HALF_LENGTH, 2 * PALM_HALF_WIDTH) * pose.scale,
        fingers=fingers,
        orientation=pose.rotation,
        face_mask=None if face_bits is None else BinaryMask(face_bits),
    )
    return image, truth


def _uniform(rng: np.random.Generator, bounds: tuple[float, float]) -> float:
    low, high = bounds
    return float(low) if low == high else float(rng.uniform(low, high))


def _integer(rng: np.random.Generator, bounds: tuple[int, int]) -> int:
    return int(rng.integers(bounds[0], bounds[1], endpoint=True))


def sample_pose(digit: int, rng: np.random.Generator, ranges: PoseRanges) -> HandPose:
    """Draw one pose for ``digit`` inside ``ranges``."""

    scale = _uniform(rng, ranges.scale)
    half = ranges.canvas // 2
    shift = rng.integers(-ranges.center_jitter, ranges.center_jitter, size=2, endpoint=True)
    center = (float(half + shift[0]), float(half + shift[1]))
    count = LAYOUTS[digit].count
    jitter = tuple(float(j) for j in rng.uniform(-ranges.jitter, ranges.jitter, size=count))
    face = None
    width = ranges.canvas
    if ranges.face:
        face = FaceSpec(
            center=(1.5 * ranges.canvas, round(FACE_HEIGHT * ranges.canvas)),
            axes=(FACE_AXES[0] * scale, FACE_AXES[1] * scale),
        )
        width = 2 * ranges.canvas
    return HandPose(
        digit=digit,
        center=center,
        scale=scale,
        rotation=_uniform(rng, ranges.rotation),
        jitter=jitter,
        skin_cb=_integer(rng, ranges.skin_cb),
        skin_cr=_integer(rng, ranges.skin_cr),
        background_cb=_integer(rng, ranges.background_cb),
        background_cr=_integer(rng, ranges.background_cr),
        canvas=(width, ranges.canvas),
        noise=ranges.noise,
        noise_seed=int(rng.integers(0, 2**31)),
        face=face,
    )


def sample_poses(
    count_per_digit: int, seed: int, ranges: PoseRanges | None = None
) -> list[HandPose]:
    """Poses in (digit, index) order, each drawn from its own spawned sub-seed."""

    if count_per_digit < 1:
        raise ParameterError("count_per_digit must be at least 1")
    ranges = ranges or PoseRanges()
    children = np.random.SeedSequence(seed).spawn(9 * count_per_digit)
    poses = []
    for position, child in enumerate(children):
        digit = position // count_per_digit + 1
        poses.append(sample_pose(digit, np.random.Generator(np.random.PCG64(child)), ranges))
    return poses


def image_name(digit: int, index: int) -> str:
    return f"digit{digit}_{index:04d}.ppm"


def generate_dataset(
    count_per_digit: int,
    seed: int,
    out_dir: Path,
    ranges: PoseRanges | None = None,
    workers: int = 1,
) -> list[ManifestEntry]:
    """Render and write a labelled image set plus ``manifest.json``."""

    poses = sample_poses(count_per_digit, seed, ranges)
    out_dir.mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        rendered = list(pool.map(lambda pose: encode_ppm(render_hand(pose)[0]), poses))
    entries = []
    for position, (pose, payload) in enumerate(zip(poses, rendered)):
        name = image_name(pose.digit, position % count_per_digit)
        (out_dir / name).write_bytes(payload)
        entries.append(ManifestEntry(path=name, label=pose.digit, pose=pose))
    storage.write_manifest(out_dir / storage.MANIFEST_NAME, entries)
    logger.info("wrote %d synthetic images to %s", len(entries), out_dir)
    return entries
