"""End-to-end orchestration: image to digit, batch featurization and benchmarks."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from handdigit.errors import HandDigitError, StageError
from handdigit.schemas import (
    DecisionTree,
    DetectionRates,
    Diagnostics,
    LearnerConfig,
    ManifestEntry,
    MetricsReport,
    PalmRecord,
    PipelineConfig,
    RecognitionResult,
)
from handdigit.services import storage
from handdigit.services.edgedetect import EdgeMap, canny, to_gray
from handdigit.services.features import (
    FeatureVector,
    Histogram,
    Peak,
    default_separation,
    detect_peaks,
    feature_vector,
    project_histogram,
    smooth,
)
from handdigit.services.fingers import (
    HandBounds,
    PalmWindow,
    hand_bounds,
    locate_palm,
    pad_to_fit,
    palm_dims,
    strip_to_fingers,
)
from handdigit.services.geometry import connected_components
from handdigit.services.handloc import (
    LocalizationOutcome,
    OrientedHand,
    locate_comparison_method,
    locate_ellipse_method,
    orient_hand,
)
from handdigit.services.imagecore import ImageRGB, lowpass, rgb_to_ycbcr
from handdigit.services.learner import (
    Dataset,
    Sample,
    classify,
    evaluate,
    metrics,
    split_dataset,
    train_tree,
)
from handdigit.services.skinclass import BinaryMask, detection_ratio, skin_mask
from handdigit.services.synthgen import PoseRanges, generate_dataset, render_hand

logger = logging.getLogger(__name__)

LEARNERS = ("id3", "c45", "c45_beta")


@dataclass(frozen=True)
class Localization:
    outcome: LocalizationOutcome
    region_count: int


@dataclass(frozen=True)
class FingerStages:
    oriented: OrientedHand
    bounds: HandBounds
    palm: PalmWindow
    fingers: BinaryMask


@dataclass(frozen=True)
class FeatureStages:
    histogram: Histogram
    peaks: list[Peak]
    vector: FeatureVector


@dataclass(frozen=True)
class Extraction:
    """Every intermediate artifact of one image, up to the feature vector."""

    localization: Localization
    hand: BinaryMask
    finger_stages: FingerStages
    feature_stages: FeatureStages

    @property
    def vector(self) -> FeatureVector:
        return self.feature_stages.vector


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Attach the stage name to any failure raised inside the block."""

    try:
        yield
    except StageError:
        raise
    except (HandDigitError, ValueError) as exc:
        raise StageError(name, str(exc)) from exc


def segment(image: ImageRGB, cfg: PipelineConfig) -> BinaryMask:
    """Low-pass, convert to YCbCr and classify skin."""

    smoothed = lowpass(image, cfg.lowpass_radius)
    return skin_mask(
        rgb_to_ycbcr(smoothed), cfg.skin.mode, cfg.skin.crisp, cfg.skin.fuzzy
    )


def detect_edges(image: ImageRGB, cfg: PipelineConfig) -> EdgeMap:
    gray = to_gray(lowpass(image, cfg.lowpass_radius))
    c = cfg.canny
    return canny(gray, c.sigma, c.t_low, c.t_high, low_ratio=c.low_ratio, high_ratio=c.high_ratio)


def localize(mask: BinaryMask, edges: Optional[EdgeMap], cfg: PipelineConfig) -> Localization:
    loc = cfg.localization
    regions = [region for region in connected_components(mask) if region.area >= loc.min_area]
    if loc.method == "ellipse":
        if edges is None:
            raise StageError("localization", "the ellipse method needs an edge map")
        outcome = locate_ellipse_method(
            mask,
            edges,
            loc.face_ratio_threshold,
            inset=loc.perimeter_inset,
            reading=loc.perimeter_reading,
            max_regions=loc.max_regions,
            min_area=loc.min_area,
        )
    else:
        outcome = locate_comparison_method(
            regions[: loc.max_regions], mask.height, two_hand_ratio=loc.two_hand_ratio
        )
    logger.debug(
        "localization (%s): %d regions, %d hand(s), face=%s",
        loc.method,
        len(regions),
        len(outcome.hands),
        outcome.face is not None,
    )
    return Localization(outcome, len(regions))


def select_hand(outcome: LocalizationOutcome, cfg: PipelineConfig) -> BinaryMask:
    """Crop the larger hand region onto its own canvas."""

    if len(outcome.hands) > 1:
        logger.warning("two hands found; using the larger one")
    hand = max(outcome.hands, key=lambda region: region.area)
    mask, _ = hand.crop(cfg.fingers.margin)
    return mask


def isolate_fingers(hand: BinaryMask, cfg: PipelineConfig) -> FingerStages:
    """Orient the hand, place the palm window and strip palm and wrist."""

    with stage("orientation"):
        oriented = orient_hand(
            hand, cfg.morphology.dilate_factor, cfg.morphology.erode_factor, cfg.fingers.margin
        )
    with stage("bounds"):
        bounds = hand_bounds(oriented.mask)
    with stage("palm"):
        dims = palm_dims(
            bounds.hand_length, cfg.fingers.palm_length_ratio, cfg.fingers.palm_width_ratio
        )
        canvas = pad_to_fit(oriented.mask, dims)
        palm = locate_palm(canvas, dims)
    with stage("fingers"):
        fingers = strip_to_fingers(canvas, palm)
    return FingerStages(oriented, bounds, palm, fingers)


def describe(fingers: BinaryMask, hand_length: float, cfg: PipelineConfig) -> FeatureStages:
    """Histogram, peaks and feature vector of a finger mask."""

    h = cfg.histogram
    with stage("histogram"):
        histogram = smooth(project_histogram(fingers, hand_length), h.window)
    with stage("peaks"):
        separation = default_separation(histogram.width, h.separation_factor)
        peaks = detect_peaks(histogram, h.min_rel_amplitude, separation)
    with stage("features"):
        vector = feature_vector(peaks)
    logger.debug("peaks: %s", [(p.x, round(p.y, 4)) for p in peaks])
    return FeatureStages(histogram, peaks, vector)


def extract(image: ImageRGB, cfg: PipelineConfig) -> Extraction:
    """Run every stage up to the feature vector; failures raise StageError."""

    with stage("skin"):
        mask = segment(image, cfg)
    edges = None
    if cfg.localization.method == "ellipse":
        with stage("edges"):
            edges = detect_edges(image, cfg)
    with stage("localization"):
        localization = localize(mask, edges, cfg)
    if not localization.outcome.found:
        raise StageError("localization", "no hand region found")
    hand = select_hand(localization.outcome, cfg)
    finger_stages = isolate_fingers(hand, cfg)
    feature_stages = describe(finger_stages.fingers, finger_stages.bounds.hand_length, cfg)
    return Extraction(localization, hand, finger_stages, feature_stages)


def extract_features(image: ImageRGB, cfg: PipelineConfig) -> FeatureVector:
    return extract(image, cfg).vector


def _diagnostics(extraction: Extraction) -> Diagnostics:
    outcome = extraction.localization.outcome
    stages = extraction.finger_stages
    palm = stages.palm
    return Diagnostics(
        region_count=extraction.localization.region_count,
        method=outcome.method,
        hands_found=len(outcome.hands),
        other_hand_ignored=len(outcome.hands) > 1,
        face_found=outcome.face is not None,
        theta_deg=math.degrees(stages.oriented.theta_applied),
        flipped=stages.oriented.flipped,
        low_confidence=stages.oriented.low_confidence,
        hand_length=stages.bounds.hand_length,
        hand_width=stages.bounds.hand_width,
        palm=PalmRecord(
            x=palm.x, y=palm.y, width=palm.width, height=palm.height, skin_count=palm.skin_count
        ),
        peaks=[(peak.x, peak.y) for peak in extraction.feature_stages.peaks],
        features=[float(v) for v in extraction.vector.as_array()],
    )


def recognize(image: ImageRGB, cfg: PipelineConfig, tree: DecisionTree) -> RecognitionResult:
    """Image to digit; a failing stage yields a rejected result naming it."""

    try:
        extraction = extract(image, cfg)
    except StageError as exc:
        logger.warning("image rejected at %s: %s", exc.stage, exc)
        return RecognitionResult(rejected=True, stage=exc.stage, message=str(exc))
    digit = classify(tree, extraction.vector)
    return RecognitionResult(digit=digit, diagnostics=_diagnostics(extraction))


def _featurize_one(
    entry: ManifestEntry, root: Path, cfg: PipelineConfig
) -> Optional[tuple[int, FeatureVector]]:
    try:
        image = storage.read_image(root / entry.path)
        return entry.label, extract_features(image, cfg)
    except StageError as exc:
        logger.warning("skipping %s: %s", entry.path, exc)
        return None


def featurize_manifest(
    entries: Sequence[ManifestEntry], root: Path, cfg: PipelineConfig, workers: int = 1
) -> list[tuple[int, FeatureVector]]:
    """Feature rows in manifest order; rejected images are skipped with a warning."""

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        rows = list(pool.map(lambda entry: _featurize_one(entry, root, cfg), entries))
    kept = [row for row in rows if row is not None]
    if len(kept) < len(rows):
        logger.warning("%d of %d images rejected", len(rows) - len(kept), len(rows))
    return kept


def to_dataset(rows: Sequence[tuple[int, FeatureVector]]) -> Dataset:
    return Dataset(tuple(Sample(vector, label) for label, vector in rows))


def _hand_found(
    image: ImageRGB, truth_hand: BinaryMask, cfg: PipelineConfig
) -> tuple[bool, BinaryMask]:
    mask = segment(image, cfg)
    edges = detect_edges(image, cfg) if cfg.localization.method == "ellipse" else None
    outcome = localize(mask, edges, cfg).outcome
    if not outcome.found:
        return False, mask
    hand = max(outcome.hands, key=lambda region: region.area)
    on_hand = truth_hand.bits[hand.pixels[:, 1], hand.pixels[:, 0]]
    return bool(np.count_nonzero(on_hand) * 2 > hand.area), mask


def detection_rates(
    entries: Sequence[ManifestEntry], root: Path, cfg: PipelineConfig, workers: int = 1
) -> DetectionRates:
    """Hand detection rate for each skin mode and localization method, plus skin coverage."""

    if not entries:
        raise HandDigitError("manifest is empty")
    combos = [(mode, method) for mode in ("crisp", "fuzzy") for method in ("ellipse", "comparison")]

    def run(entry: ManifestEntry) -> tuple[list[bool], dict[str, BinaryMask], BinaryMask]:
        image = storage.read_image(root / entry.path)
        _, truth = render_hand(entry.pose)
        found: list[bool] = []
        masks: dict[str, BinaryMask] = {}
        for mode, method in combos:
            variant = cfg.model_copy(
                update={
                    "skin": cfg.skin.model_copy(update={"mode": mode}),
                    "localization": cfg.localization.model_copy(update={"method": method}),
                }
            )
            hit, mask = _hand_found(image, truth.mask, variant)
            found.append(hit)
            masks[mode] = mask
        return found, masks, truth.skin

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(run, entries))
    rates = {
        f"{mode}/{method}": sum(found[i] for found, _, _ in results) / len(results)
        for i, (mode, method) in enumerate(combos)
    }
    truths = [truth for _, _, truth in results]
    skin = {
        mode: detection_ratio([masks[mode] for _, masks, _ in results], truths)
        for mode in ("crisp", "fuzzy")
    }
    return DetectionRates(images=len(results), rates=rates, skin_detection=skin)


def run_benchmark(
    per_digit: int,
    seed: int,
    out_dir: Path,
    cfg: PipelineConfig,
    ranges: PoseRanges | None = None,
    workers: int = 1,
) -> dict[str, MetricsReport]:
    """Synthesize, featurize, split, then train and score every learner."""

    entries = generate_dataset(per_digit, seed, out_dir, ranges, workers)
    rows = featurize_manifest(entries, out_dir, cfg, workers)
    dataset = to_dataset(rows)
    storage.write_dataset(out_dir / storage.FEATURES_NAME, dataset)
    train, test = split_dataset(dataset, cfg.train_fraction, seed)
    storage.write_dataset(out_dir / "train.csv", train)
    storage.write_dataset(out_dir / "test.csv", test)
    reports: dict[str, MetricsReport] = {}
    for kind in LEARNERS:
        learner_cfg: LearnerConfig = cfg.learner.model_copy(update={"kind": kind})
        tree = train_tree(train, learner_cfg)
        storage.write_json(out_dir / f"tree_{kind}.json", tree)
        report = metrics(evaluate(tree, test))
        storage.write_json(out_dir / f"metrics_{kind}.json", report)
        reports[kind] = report
        logger.info("%s: global error %.4f", kind, report.global_error)
    return reports
