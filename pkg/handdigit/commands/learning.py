"""Dataset and model commands: synth, split, train, classify, evaluate, benchmark, detect-rates."""

from __future__ import annotations

import argparse
import json
import logging
from pathlib import Path

from handdigit.commands import override
from handdigit.config import get_settings
from handdigit.errors import UsageError
from handdigit.schemas import DecisionTree, PipelineConfig
from handdigit.services import learner, pipeline, storage
from handdigit.services.synthgen import PoseRanges, generate_dataset

logger = logging.getLogger(__name__)


def register(subparsers: argparse._SubParsersAction) -> None:
    defaults = PipelineConfig()
    ranges = PoseRanges()

    command = subparsers.add_parser("synth", help="render a labelled synthetic dataset")
    command.add_argument("--per-digit", type=int, required=True)
    command.add_argument("--seed", type=int, required=True)
    command.add_argument("--out", type=Path, required=True)
    command.add_argument(
        "--rotation",
        type=float,
        nargs=2,
        metavar=("MIN", "MAX"),
        help=f"default: {ranges.rotation}",
    )
    command.add_argument(
        "--scale", type=float, nargs=2, metavar=("MIN", "MAX"), help=f"default: {ranges.scale}"
    )
    command.add_argument("--noise", type=float, help="chroma noise sigma (default: 0)")
    command.add_argument("--face", action="store_true", help="add a face beside each hand")
    command.set_defaults(handler=synth_command)

    command = subparsers.add_parser("split", help="stratified train/test split of a CSV")
    command.add_argument("--data", type=Path, required=True)
    command.add_argument("--train-out", type=Path, required=True)
    command.add_argument("--test-out", type=Path, required=True)
    command.add_argument("--fraction", type=float, help=f"default: {defaults.train_fraction}")
    command.add_argument("--seed", type=int, help=f"default: {defaults.seed}")
    command.set_defaults(handler=split_command)

    command = subparsers.add_parser("train", help="induce a decision tree")
    command.add_argument("--data", type=Path, required=True)
    command.add_argument("--out", type=Path, required=True)
    _learner_flags(command, defaults)
    command.set_defaults(handler=train_command)

    command = subparsers.add_parser("classify", help="print the digit signed in an image")
    command.add_argument("--tree", type=Path, required=True)
    command.add_argument("--image", type=Path, required=True)
    command.set_defaults(handler=classify_command)

    command = subparsers.add_parser(
        "evaluate", help="score a tree on a CSV, or run repeated hold-out with --repeats"
    )
    command.add_argument("--data", type=Path, required=True)
    command.add_argument("--tree", type=Path)
    command.add_argument("--out", type=Path, help="metrics JSON path")
    command.add_argument("--repeats", type=int)
    command.add_argument("--fraction", type=float, help=f"default: {defaults.train_fraction}")
    command.add_argument("--seed", type=int, help=f"default: {defaults.seed}")
    _learner_flags(command, defaults)
    command.set_defaults(handler=evaluate_command)

    command = subparsers.add_parser("benchmark", help="synthesize, train and score all learners")
    command.add_argument("--per-digit", type=int, required=True)
    command.add_argument("--seed", type=int, required=True)
    command.add_argument("--out", type=Path, required=True)
    command.set_defaults(handler=benchmark_command)

    command = subparsers.add_parser("detect-rates", help="hand detection rate per method")
    command.add_argument("--manifest", type=Path, required=True)
    command.set_defaults(handler=detect_rates_command)


def _learner_flags(command: argparse.ArgumentParser, defaults: PipelineConfig) -> None:
    command.add_argument(
        "--learner", choices=("id3", "c45", "c45_beta"), help=f"default: {defaults.learner.kind}"
    )
    command.add_argument("--bins", type=int, help=f"ID3 bins (default: {defaults.learner.bins})")
    command.add_argument("--beta", type=float, help=f"default: {defaults.learner.beta}")
    command.add_argument("--prune", action="store_true", default=None, help="pessimistic pruning")


def _learner_config(args: argparse.Namespace, config: PipelineConfig) -> PipelineConfig:
    return override(
        config, "learner", kind=args.learner, bins=args.bins, beta=args.beta, prune=args.prune
    )


def synth_command(args: argparse.Namespace, config: PipelineConfig) -> int:
    updates = {
        "rotation": tuple(args.rotation) if args.rotation else None,
        "scale": tuple(args.scale) if args.scale else None,
        "noise": args.noise,
        "face": args.face or None,
    }
    ranges = PoseRanges(**{key: value for key, value in updates.items() if value is not None})
    entries = generate_dataset(
        args.per_digit, args.seed, args.out, ranges, get_settings().worker_count
    )
    print(f"{len(entries)} images written to {args.out}")
    return 0


def split_command(args: argparse.Namespace, config: PipelineConfig) -> int:
    dataset = storage.read_dataset(args.data)
    fraction = args.fraction if args.fraction is not None else config.train_fraction
    seed = args.seed if args.seed is not None else config.seed
    train, test = learner.split_dataset(dataset, fraction, seed)
    storage.write_dataset(args.train_out, train)
    storage.write_dataset(args.test_out, test)
    print(f"train {len(train)} / test {len(test)}")
    return 0


def train_command(args: argparse.Namespace, config: PipelineConfig) -> int:
    config = _learner_config(args, config)
    dataset = storage.read_dataset(args.data)
    tree = learner.train_tree(dataset, config.learner)
    training = learner.metrics(learner.evaluate(tree, dataset))
    logger.info("%s resubstitution global error: %.4f", tree.learner, training.global_error)
    storage.write_json(args.out, tree)
    return 0


def classify_command(args: argparse.Namespace, config: PipelineConfig) -> int:
    tree = storage.read_json(args.tree, DecisionTree)
    result = pipeline.recognize(storage.read_image(args.image), config, tree)
    if result.rejected:
        print(f"rejected ({result.stage}): {result.message}")
        return 2
    print(result.digit)
    return 0


def evaluate_command(args: argparse.Namespace, config: PipelineConfig) -> int:
    dataset = storage.read_dataset(args.data)
    if args.repeats is not None:
        if args.tree is not None:
            raise UsageError("--tree and --repeats are mutually exclusive")
        config = _learner_config(args, config)
        learner_config = config.learner
        summary = learner.repeated_holdout(
            dataset,
            lambda train: learner.train_tree(train, learner_config),
            args.repeats,
            args.fraction if args.fraction is not None else config.train_fraction,
            args.seed if args.seed is not None else config.seed,
        )
        if args.out is not None:
            storage.write_json(args.out, summary)
        print(summary.model_dump_json(indent=2))
        return 0
    if args.tree is None:
        raise UsageError("evaluate needs --tree, or --repeats to train on the fly")
    tree = storage.read_json(args.tree, DecisionTree)
    report = learner.metrics(learner.evaluate(tree, dataset))
    if args.out is not None:
        storage.write_json(args.out, report)
    print(report.model_dump_json(indent=2))
    print(learner.format_confusion(report))
    return 0


def benchmark_command(args: argparse.Namespace, config: PipelineConfig) -> int:
    reports = pipeline.run_benchmark(
        args.per_digit, args.seed, args.out, config, workers=get_settings().worker_count
    )
    print(json.dumps({kind: report.global_error for kind, report in reports.items()}))
    return 0


def detect_rates_command(args: argparse.Namespace, config: PipelineConfig) -> int:
    entries = storage.read_manifest(args.manifest)
    rates = pipeline.detection_rates(
        entries, args.manifest.parent, config, get_settings().worker_count
    )
    print(rates.model_dump_json(indent=2))
    return 0
