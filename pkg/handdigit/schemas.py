"""Shared pydantic schemas."""

from __future__ import annotations

from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from handdigit.services.features import FEATURE_NAMES
from handdigit.services.skinclass import CrispSkinRange, FuzzySkinSystem

LearnerKind = Literal["id3", "c45", "c45_beta"]


class SkinConfig(BaseModel):
    """Skin classifier selection and parameters."""

    model_config = ConfigDict(frozen=True)

    mode: Literal["crisp", "fuzzy"] = "fuzzy"
    crisp: CrispSkinRange = Field(default_factory=CrispSkinRange)
    fuzzy: FuzzySkinSystem = Field(default_factory=FuzzySkinSystem)


class CannyConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    sigma: float = Field(default=1.4, gt=0.0)
    low_ratio: float = Field(default=0.1, gt=0.0, lt=1.0)
    high_ratio: float = Field(default=0.3, gt=0.0, le=1.0)
    t_low: Optional[float] = Field(default=None, gt=0.0)
    t_high: Optional[float] = Field(default=None, gt=0.0)

    @model_validator(mode="after")
    def _check_order(self) -> "CannyConfig":
        if self.low_ratio >= self.high_ratio:
            raise ValueError("low_ratio must be below high_ratio")
        if self.t_low is not None and self.t_high is not None and self.t_low >= self.t_high:
            raise ValueError("t_low must be below t_high")
        return self


class LocalizationConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    method: Literal["ellipse", "comparison"] = "comparison"
    face_ratio_threshold: float = Field(default=0.8, gt=0.0, lt=1.0)
    two_hand_ratio: float = Field(default=1.5, ge=1.0)
    perimeter_inset: float = Field(default=2.0, ge=0.0)
    perimeter_reading: Literal["skin", "edges"] = "skin"
    max_regions: int = Field(default=3, ge=1)
    min_area: int = Field(
        default=64, ge=1, description="Regions smaller than this are treated as noise"
    )


class MorphologyConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    dilate_factor: float = Field(default=0.05, gt=0.0, lt=1.0)
    erode_factor: float = Field(default=0.10, gt=0.0, lt=1.0)


class FingerConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    palm_length_ratio: float = Field(default=0.496, gt=0.0, lt=1.0)
    palm_width_ratio: float = Field(default=0.44, gt=0.0, lt=1.0)
    margin: int = Field(default=2, ge=0, description="Background border kept around crops")


class HistogramConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    window: int = Field(default=5, ge=1)
    min_rel_amplitude: float = Field(default=0.1, gt=0.0, lt=1.0)
    separation_factor: float = Field(default=0.08, ge=0.0, lt=1.0)

    @model_validator(mode="after")
    def _check_window(self) -> "HistogramConfig":
        if self.window % 2 == 0:
            raise ValueError("smoothing window must be odd")
        return self


class LearnerConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: LearnerKind = "c45"
    bins: int = Field(default=8, ge=2, description="ID3 equal-width bins per feature")
    beta: float = Field(default=2.0, gt=0.0)
    prune: bool = False
    confidence: float = Field(default=0.25, gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def _check_beta(self) -> "LearnerConfig":
        if self.beta == 1.0:
            raise ValueError("beta = 1 is Shannon entropy; use the c45 learner")
        return self


class PipelineConfig(BaseModel):
    """Every tunable of the recognizer; ``PipelineConfig()`` is the default."""

    model_config = ConfigDict(frozen=True)

    skin: SkinConfig = Field(default_factory=SkinConfig)
    canny: CannyConfig = Field(default_factory=CannyConfig)
    localization: LocalizationConfig = Field(default_factory=LocalizationConfig)
    morphology: MorphologyConfig = Field(default_factory=MorphologyConfig)
    fingers: FingerConfig = Field(default_factory=FingerConfig)
    histogram: HistogramConfig = Field(default_factory=HistogramConfig)
    learner: LearnerConfig = Field(default_factory=LearnerConfig)
    lowpass_radius: int = Field(default=1, ge=0)
    train_fraction: float = Field(default=0.7, gt=0.0, lt=1.0)
    seed: int = Field(default=0, ge=0)


class TreeNode(BaseModel):
    """One decision-tree node; ``counts`` holds training samples per digit 1..9."""

    kind: Literal["leaf", "categorical", "threshold"]
    counts: List[int]
    label: int = Field(ge=1, le=9, description="Majority digit at this node")
    feature: Optional[int] = Field(default=None, ge=0, lt=len(FEATURE_NAMES))
    threshold: Optional[float] = None
    branches: dict[int, "TreeNode"] = Field(default_factory=dict)
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None

    @model_validator(mode="after")
    def _check_shape(self) -> "TreeNode":
        if len(self.counts) != 9:
            raise ValueError("counts must have one entry per digit")
        if self.kind == "categorical" and (self.feature is None or not self.branches):
            raise ValueError("categorical node needs a feature and branches")
        if self.kind == "threshold" and (
            self.feature is None
            or self.threshold is None
            or self.left is None
            or self.right is None
        ):
            raise ValueError("threshold node needs feature, threshold and both children")
        return self

    @property
    def total(self) -> int:
        return sum(self.counts)

    def leaves(self) -> list["TreeNode"]:
        if self.kind == "leaf":
            return [self]
        children = (
            list(self.branches.values()) if self.kind == "categorical" else [self.left, self.right]
        )
        return [leaf for child in children if child is not None for leaf in child.leaves()]

    def depth(self) -> int:
        if self.kind == "leaf":
            return 0
        children = (
            list(self.branches.values()) if self.kind == "categorical" else [self.left, self.right]
        )
        return 1 + max(child.depth() for child in children if child is not None)


class Discretizer(BaseModel):
    """Equal-width binning learned on a training set."""

    bins: int = Field(ge=2)
    low: List[float]
    high: List[float]
    max_peaks: int = 5


class DecisionTree(BaseModel):
    learner: LearnerKind
    root: TreeNode
    beta: Optional[float] = None
    discretizer: Optional[Discretizer] = None
    pruned: bool = False
    feature_names: List[str] = Field(default_factory=lambda: list(FEATURE_NAMES))


class MetricsReport(BaseModel):
    """Confusion matrix and per-class error rates; undefined rates are null."""

    confusion: List[List[int]]
    card: int
    global_error: float
    accuracy: float
    recall: List[Optional[float]]
    precision: List[Optional[float]]
    apriori_error: List[Optional[float]]
    aposteriori_error: List[Optional[float]]


class HoldoutReport(BaseModel):
    reports: List[MetricsReport]
    mean_global_error: float


class DetectionRates(BaseModel):
    """Share of images whose hand was localized, per skin mode and method."""

    images: int
    rates: dict[str, float]
    skin_detection: dict[str, float] = Field(default_factory=dict)


class PalmRecord(BaseModel):
    x: int
    y: int
    width: int
    height: int
    skin_count: int


class Diagnostics(BaseModel):
    region_count: int = 0
    method: Optional[str] = None
    hands_found: int = 0
    other_hand_ignored: bool = False
    face_found: bool = False
    theta_deg: Optional[float] = None
    flipped: bool = False
    low_confidence: bool = False
    hand_length: Optional[float] = None
    hand_width: Optional[float] = None
    palm: Optional[PalmRecord] = None
    peaks: List[tuple[int, float]] = Field(default_factory=list)
    features: Optional[List[float]] = None


class RecognitionResult(BaseModel):
    """Digit or rejection, with what every stage observed."""

    digit: Optional[int] = Field(default=None, ge=1, le=9)
    rejected: bool = False
    stage: Optional[str] = Field(default=None, description="Stage that rejected the image")
    message: Optional[str] = None
    diagnostics: Diagnostics = Field(default_factory=Diagnostics)

    @model_validator(mode="after")
    def _check_outcome(self) -> "RecognitionResult":
        if self.rejected == (self.digit is not None):
            raise ValueError("a result carries a digit exactly when it is not rejected")
        return self


class FaceSpec(BaseModel):
    """Solid skin ellipse standing in for a face."""

    model_config = ConfigDict(frozen=True)

    center: tuple[float, float]
    axes: tuple[float, float] = Field(description="Horizontal and vertical semi-axes in pixels")


class HandPose(BaseModel):
    """Everything needed to render one synthetic hand image."""

    model_config = ConfigDict(frozen=True)

    digit: int = Field(ge=1, le=9)
    center: tuple[float, float] = Field(description="Palm centre in pixels")
    scale: float = Field(gt=0.0, description="Hand length in pixels")
    rotation: float = Field(default=90.0, description="Degrees; 90 points the fingers up")
    jitter: tuple[float, ...] = Field(
        default=(), description="Per-finger angular offsets in degrees, thumb last"
    )
    skin_cb: int = 100
    skin_cr: int = 165
    background_cb: int = 155
    background_cr: int = 110
    canvas: tuple[int, int] = Field(default=(256, 256), description="(width, height)")
    noise: float = Field(default=0.0, ge=0.0, description="Chroma noise standard deviation")
    noise_seed: int = 0
    face: Optional[FaceSpec] = None

    @model_validator(mode="after")
    def _check_colours(self) -> "HandPose":
        box = CrispSkinRange()
        if not box.contains(self.skin_cb, self.skin_cr):
            raise ValueError(
                f"skin chroma ({self.skin_cb}, {self.skin_cr}) is outside the skin box"
            )
        if box.contains(self.background_cb, self.background_cr):
            raise ValueError("background chroma falls inside the skin box")
        return self


class ManifestEntry(BaseModel):
    """One generated image: path relative to the manifest, label and pose."""

    path: str
    label: int = Field(ge=1, le=9)
    pose: HandPose
