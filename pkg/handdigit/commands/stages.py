"""Per-stage commands: skin-mask, edges, locate, fingers, featurize, pipeline."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from handdigit.commands import override
from handdigit.config import get_settings
from handdigit.errors import StageError, UsageError
from handdigit.schemas import DecisionTree, Diagnostics, PalmRecord, PipelineConfig
from handdigit.services import pipeline, storage
from handdigit.services.edgedetect import EdgeMap

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    defaults = PipelineConfig()

    command = subparsers.add_parser("skin-mask", help="classify skin pixels into a PGM mask")
    command.add_argument("--image", type=Path, required=True)
    command.add_argument("--out", type=Path, required=True)
    command.add_argument(
        "--mode", choices=("crisp", "fuzzy"), help=f"default: {defaults.skin.mode}"
    )
    command.set_defaults(handler=skin_mask_command)

    command = subparsers.add_parser("edges", help="Canny edge map as a PGM mask")
    command.add_argument("--image", type=Path, required=True)
    command.add_argument("--out", type=Path, required=True)
    command.add_argument("--sigma", type=float, help=f"default: {defaults.canny.sigma}")
    command.add_argument("--t-low", type=float, help="absolute low threshold")
    command.add_argument("--t-high", type=float, help="absolute high threshold")
    command.set_defaults(handler=edges_command)

    command = subparsers.add_parser("locate", help="pick the hand region of a skin mask")
    command.add_argument("--mask", type=Path, required=True)
    command.add_argument("--edges", type=Path, help="edge map, needed by the ellipse method")
    command.add_argument("--out", type=Path, required=True)
    command.add_argument(
        "--method",
        choices=("ellipse", "comparison"),
        help=f"default: {defaults.localization.method}",
    )
    command.set_defaults(handler=locate_command)

    command = subparsers.add_parser("fingers", help="orient a hand mask and strip the palm")
    command.add_argument("--hand", type=Path, required=True)
    command.add_argument("--out", type=Path, required=True)
    command.set_defaults(handler=fingers_command)

    command = subparsers.add_parser("featurize", help="feature vectors as CSV")
    source = command.add_mutually_exclusive_group(required=True)
    source.add_argument("--image", type=Path)
    source.add_argument("--fingers", type=Path)
    source.add_argument("--manifest", type=Path)
    command.add_argument("--hand-length", type=float, help="overrides the finger mask comment")
    command.add_argument("--out", type=Path, help="CSV path (default: stdout)")
    command.set_defaults(handler=featurize_command)

    command = subparsers.add_parser("pipeline", help="recognize one image end to end")
    command.add_argument("--image", type=Path, required=True)
    command.add_argument("--tree", type=Path, required=True)
    command.set_defaults(handler=pipeline_command)


def skin_mask_command(args: argparse.Namespace, config: PipelineConfig) -> int:
    config = override(config, "skin", mode=args.mode)
    mask = pipeline.segment(storage.read_image(args.image), config)
    storage.write_mask(args.out, mask)
    logger.info("skin mask: %d pixels -> %s", mask.count, args.out)
    return 0


def edges_command(args: argparse.Namespace, config: PipelineConfig) -> int:
    if (args.t_low is None) != (args.t_high is None):
        raise UsageError("--t-low and --t-high must be given together")
    config = override(config, "canny", sigma=args.sigma, t_low=args.t_low, t_high=args.t_high)
    edges = pipeline.detect_edges(storage.read_image(args.image), config)
    storage.write_mask(args.out, edges)
    return 0


def locate_command(args: argparse.Namespace, config: PipelineConfig) -> int:
    config = override(config, "localization", method=args.method)
    mask, _ = storage.read_mask(args.mask)
    edges = None
    if args.edges is not None:
        edge_mask, _ = storage.read_mask(args.edges)
        edges = EdgeMap(edge_mask.bits)
    with pipeline.stage("localization"):
        localization = pipeline.localize(mask, edges, config)
    outcome = localization.outcome
    if not outcome.found:
        raise StageError("localization", "no hand region found")
    storage.write_mask(args.out, pipeline.select_hand(outcome, config))
    diagnostics = Diagnostics(
        region_count=localization.region_count,
        method=outcome.method,
        hands_found=len(outcome.hands),
        other_hand_ignored=len(outcome.hands) > 1,
        face_found=outcome.face is not None,
    )
    print(diagnostics.model_dump_json(exclude_none=True))
    return 0


def fingers_command(args: argparse.Namespace, config: PipelineConfig) -> int:
    hand, _ = storage.read_mask(args.hand)
    stages = pipeline.isolate_fingers(hand, config)
    comment = storage.hand_length_comment(stages.bounds.hand_length)
    storage.write_mask(args.out, stages.fingers, (comment,))
    palm = stages.palm
    diagnostics = Diagnostics(
        theta_deg=math.degrees(stages.oriented.theta_applied),
        flipped=stages.oriented.flipped,
        low_confidence=stages.oriented.low_confidence,
        hand_length=stages.bounds.hand_length,
        hand_width=stages.bounds.hand_width,
        palm=PalmRecord(
            x=palm.x, y=palm.y, width=palm.width, height=palm.height, skin_count=palm.skin_count
        ),
    )
    print(diagnostics.model_dump_json(exclude_none=True))
    return 0


def featurize_command(args: argparse.Namespace, config: PipelineConfig) -> int:
    if args.manifest is not None:
        entries = storage.read_manifest(args.manifest)
        workers = get_settings().worker_count
        rows = pipeline.featurize_manifest(entries, args.manifest.parent, config, workers)
    elif args.image is not None:
        rows = [(None, pipeline.extract_features(storage.read_image(args.image), config))]
    else:
        fingers, comments = storage.read_mask(args.fingers)
        hand_length = args.hand_length
        if hand_length is None:
            hand_length = storage.parse_hand_length(comments)
        if hand_length is None:
            raise UsageError("--hand-length is required: the finger mask carries no hand length")
        rows = [(None, pipeline.describe(fingers, hand_length, config).vector)]
    if args.out is None:
        sys.stdout.write(storage.format_features(rows))
    else:
        storage.write_features(args.out, rows)
        logger.info("wrote %d feature rows to %s", len(rows), args.out)
    return 0


def pipeline_command(args: argparse.Namespace, config: PipelineConfig) -> int:
    tree = storage.read_json(args.tree, DecisionTree)
    result = pipeline.recognize(storage.read_image(args.image), config, tree)
    print(result.model_dump_json())
    return 2 if result.rejected else 0
