"""Decision-tree induction (ID3, C4.5, beta-entropy C4.5) and evaluation.

Trees are the pydantic documents from :mod:`handdigit.schemas`, so a trained
model is written and read with ``model_dump_json``/``model_validate_json``.
Leaf ties resolve to the smaller digit; split ties resolve to the smaller
feature index, then the smaller threshold.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Final, Iterable, Sequence

import numpy as np
from scipy import stats

from handdigit.errors import ParameterError, StratificationError
from handdigit.schemas import (
    DecisionTree,
    Discretizer,
    HoldoutReport,
    LearnerConfig,
    MetricsReport,
    TreeNode,
)
from handdigit.services.features import FEATURE_COUNT, MAX_PEAKS, FeatureVector
from handdigit.services.imagecore import round_half_away

logger = logging.getLogger(__name__)

DIGITS: Final[tuple[int, ...]] = tuple(range(1, 10))
_GAIN_SLACK: Final[float] = 1e-12

EntropyFn = Callable[[np.ndarray], np.ndarray]
Trainer = Callable[["Dataset"], DecisionTree]


@dataclass(frozen=True)
class Sample:
    vector: FeatureVector
    label: int

    def __post_init__(self) -> None:
        if self.label not in DIGITS:
            raise ParameterError(f"label {self.label} is not a digit 1..9")


@dataclass(frozen=True)
class Dataset:
    samples: tuple[Sample, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple(self.samples))

    def __len__(self) -> int:
        return len(self.samples)

    def matrix(self) -> np.ndarray:
        if not self.samples:
            return np.zeros((0, FEATURE_COUNT))
        return np.vstack([sample.vector.as_array() for sample in self.samples])

    def labels(self) -> np.ndarray:
        return np.array([sample.label for sample in self.samples], dtype=np.int64)


@dataclass(frozen=True)
class ConfusionMatrix:
    """``counts[i][j]``: samples of digit i+1 assigned to digit j+1."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        counts = np.array(self.counts, dtype=np.int64)
        if counts.shape != (9, 9) or (counts < 0).any():
            raise ParameterError("confusion matrix must be a non-negative 9x9 count table")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def card(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int]]) -> "ConfusionMatrix":
        counts = np.zeros((9, 9), dtype=np.int64)
        for true, assigned in pairs:
            counts[true - 1, assigned - 1] += 1
        return cls(counts)


def class_counts(labels: np.ndarray) -> np.ndarray:
    return np.bincount(labels - 1, minlength=9)[:9]


def majority(counts: Sequence[int] | np.ndarray) -> int:
    """Most frequent digit; argmax keeps the smaller digit on ties."""

    return int(np.argmax(counts)) + 1


def shannon_entropy(counts: np.ndarray) -> np.ndarray:
    """Base-2 entropy of class-count rows (last axis)."""

    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum(axis=-1, keepdims=True)
    p = np.divide(counts, total, out=np.zeros_like(counts), where=total > 0)
    logs = np.log2(p, out=np.zeros_like(p), where=p > 0)
    return -(p * logs).sum(axis=-1)


def daroczy_entropy(counts: np.ndarray, beta: float) -> np.ndarray:
    """Generalized entropy of degree beta: (sum p^beta - 1) / (2^(1-beta) - 1)."""

    if beta <= 0 or beta == 1.0:
        raise ParameterError("beta must be positive and different from 1")
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum(axis=-1, keepdims=True)
    p = np.divide(counts, total, out=np.zeros_like(counts), where=total > 0)
    powered = np.power(p, beta, out=np.zeros_like(p), where=p > 0)
    value = (powered.sum(axis=-1) - 1.0) / (2.0 ** (1.0 - beta) - 1.0)
    return np.where(total[..., 0] > 0, value, 0.0)


def split_dataset(dataset: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified seeded split; each class is permuted and cut at round(f * count)."""

    if not 0.0 < train_fraction < 1.0:
        raise ParameterError("train_fraction must lie in (0, 1)")
    rng = np.random.Generator(np.random.PCG64(seed))
    labels = dataset.labels()
    train: list[Sample] = []
    test: list[Sample] = []
    for digit in sorted(set(labels.tolist())):
        members = np.flatnonzero(labels == digit)
        if members.size < 2:
            raise StratificationError(f"digit {digit} has {members.size} sample(s), need 2")
        order = rng.permutation(members)
        n_train = int(round_half_away(train_fraction * members.size))
        n_train = min(max(n_train, 1), members.size - 1)
        train.extend(dataset.samples[i] for i in order[:n_train])
        test.extend(dataset.samples[i] for i in order[n_train:])
    return Dataset(tuple(train)), Dataset(tuple(test))


def fit_discretizer(matrix: np.ndarray, bins: int) -> Discretizer:
    if bins < 2:
        raise ParameterError("bins_per_feature must be at least 2")
    return Discretizer(
        bins=bins,
        low=[float(v) for v in matrix.min(axis=0)],
        high=[float(v) for v in matrix.max(axis=0)],
        max_peaks=MAX_PEAKS,
    )


def discretize(discretizer: Discretizer, matrix: np.ndarray) -> np.ndarray:
    """Map rows to bin ids; out-of-range values clamp to the extreme bins."""

    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    binned = np.zeros(matrix.shape, dtype=np.int64)
    binned[:, 0] = np.clip(round_half_away(matrix[:, 0]), 0, discretizer.max_peaks)
    low = np.asarray(discretizer.low[1:])
    high = np.asarray(discretizer.high[1:])
    span = high - low
    width = np.where(span > 0, span / discretizer.bins, 1.0)
    raw = np.floor((matrix[:, 1:] - low) / width)
    raw = np.where(span > 0, raw, 0.0)
    binned[:, 1:] = np.clip(raw, 0, discretizer.bins - 1).astype(np.int64)
    return binned


def _leaf(counts: np.ndarray) -> TreeNode:
    return TreeNode(kind="leaf", counts=[int(c) for c in counts], label=majority(counts))


def _grow_id3(binned: np.ndarray, labels: np.ndarray, attributes: frozenset[int]) -> TreeNode:
    counts = class_counts(labels)
    if np.count_nonzero(counts) <= 1 or not attributes:
        return _leaf(counts)
    parent = float(shannon_entropy(counts))
    best_feature, best_gain = -1, -np.inf
    for feature in sorted(attributes):
        values, inverse = np.unique(binned[:, feature], return_inverse=True)
        if values.size < 2:
            continue
        table = np.zeros((values.size, 9), dtype=np.int64)
        np.add.at(table, (inverse, labels - 1), 1)
        weights = table.sum(axis=1) / labels.size
        gain = parent - float((weights * shannon_entropy(table)).sum())
        if gain > best_gain + _GAIN_SLACK:
            best_feature, best_gain = feature, gain
    if best_feature < 0:
        return _leaf(counts)
    remaining = attributes - {best_feature}
    branches: dict[int, TreeNode] = {}
    for value in np.unique(binned[:, best_feature]):
        chosen = binned[:, best_feature] == value
        branches[int(value)] = _grow_id3(binned[chosen], labels[chosen], remaining)
    return TreeNode(
        kind="categorical",
        counts=[int(c) for c in counts],
        label=majority(counts),
        feature=best_feature,
        branches=branches,
    )


def train_id3(train: Dataset, bins_per_feature: int = 8) -> DecisionTree:
    """Shannon information gain over equal-width discretized features."""

    if not len(train):
        raise ParameterError("training set is empty")
    matrix = train.matrix()
    discretizer = fit_discretizer(matrix, bins_per_feature)
    binned = discretize(discretizer, matrix)
    root = _grow_id3(binned, train.labels(), frozenset(range(FEATURE_COUNT)))
    logger.debug("id3: %d leaves, depth %d", len(root.leaves()), root.depth())
    return DecisionTree(learner="id3", root=root, discretizer=discretizer)


@dataclass(frozen=True)
class _Split:
    feature: int
    threshold: float
    gain: float
    ratio: float


def _threshold_candidates(
    feature: int, column: np.ndarray, labels: np.ndarray, entropy: EntropyFn, parent: float
) -> list[_Split]:
    """Every midpoint between consecutive distinct values, in ascending order."""

    order = np.argsort(column, kind="stable")
    values = column[order]
    cuts = np.flatnonzero(values[:-1] != values[1:])
    if cuts.size == 0:
        return []
    onehot = np.zeros((labels.size, 9), dtype=np.int64)
    onehot[np.arange(labels.size), labels[order] - 1] = 1
    cumulative = np.cumsum(onehot, axis=0)
    left = cumulative[cuts]
    right = cumulative[-1] - left
    n_left = left.sum(axis=1).astype(np.float64)
    n_right = right.sum(axis=1).astype(np.float64)
    total = float(labels.size)
    gains = parent - (n_left * entropy(left) + n_right * entropy(right)) / total
    split_info = entropy(np.column_stack([n_left, n_right]))
    ratios = np.divide(gains, split_info, out=np.zeros_like(gains), where=split_info > 0)
    low, high = values[cuts], values[cuts + 1]
    thresholds = (low + high) / 2.0
    # midpoint of adjacent floats can round up to the upper value
    thresholds = np.where((low <= thresholds) & (thresholds < high), thresholds, low)
    return [
        _Split(feature, float(t), float(g), float(r))
        for t, g, r in zip(thresholds, gains, ratios)
    ]


def _choose_split(candidates: Sequence[_Split]) -> _Split:
    """Highest gain ratio among candidates whose gain reaches the mean gain.

    ``candidates`` arrive ordered by feature then threshold, so keeping the
    first strict improvement breaks ties toward the smaller feature index and
    then the smaller threshold.
    """

    average = sum(split.gain for split in candidates) / len(candidates)
    chosen: _Split | None = None
    for split in candidates:
        if split.gain + _GAIN_SLACK < average:
            continue
        if chosen is None or split.ratio > chosen.ratio + _GAIN_SLACK:
            chosen = split
    assert chosen is not None
    return chosen


def _grow_c45(matrix: np.ndarray, labels: np.ndarray, entropy: EntropyFn) -> TreeNode:
    counts = class_counts(labels)
    if np.count_nonzero(counts) <= 1:
        return _leaf(counts)
    parent = float(entropy(counts[np.newaxis, :])[0])
    candidates: list[_Split] = []
    for feature in range(matrix.shape[1]):
        candidates.extend(
            _threshold_candidates(feature, matrix[:, feature], labels, entropy, parent)
        )
    if not candidates:
        return _leaf(counts)
    chosen = _choose_split(candidates)
    goes_left = matrix[:, chosen.feature] <= chosen.threshold
    return TreeNode(
        kind="threshold",
        counts=[int(c) for c in counts],
        label=majority(counts),
        feature=chosen.feature,
        threshold=chosen.threshold,
        left=_grow_c45(matrix[goes_left], labels[goes_left], entropy),
        right=_grow_c45(matrix[~goes_left], labels[~goes_left], entropy),
    )


def train_c45(train: Dataset) -> DecisionTree:
    """Binary threshold splits ranked by gain ratio among above-average gains."""

    if not len(train):
        raise ParameterError("training set is empty")
    root = _grow_c45(train.matrix(), train.labels(), shannon_entropy)
    logger.debug("c45: %d leaves, depth %d", len(root.leaves()), root.depth())
    return DecisionTree(learner="c45", root=root)


def train_c45_beta(train: Dataset, beta: float = 2.0) -> DecisionTree:
    """C4.5 with Daroczy entropy of degree ``beta`` in both gain and split info."""

    if beta <= 0 or beta == 1.0:
        raise ParameterError("beta must be positive and different from 1; use train_c45")
    if not len(train):
        raise ParameterError("training set is empty")

    def entropy(counts: np.ndarray) -> np.ndarray:
        return daroczy_entropy(counts, beta)

    root = _grow_c45(train.matrix(), train.labels(), entropy)
    logger.debug("c45_beta(%.3f): %d leaves, depth %d", beta, len(root.leaves()), root.depth())
    return DecisionTree(learner="c45_beta", root=root, beta=beta)


def _upper_error(errors: int, total: int, confidence: float) -> float:
    """Clopper-Pearson upper bound on the error rate at the given confidence."""

    if errors >= total:
        return 1.0
    return float(stats.beta.ppf(1.0 - confidence, errors + 1, total - errors))


def _estimated_errors(node: TreeNode, confidence: float) -> float:
    return node.total * _upper_error(node.total - max(node.counts), node.total, confidence)


def _prune(node: TreeNode, confidence: float) -> TreeNode:
    if node.kind == "leaf":
        return node
    if node.kind == "categorical":
        node = node.model_copy(
            update={"branches": {k: _prune(c, confidence) for k, c in node.branches.items()}}
        )
    else:
        node = node.model_copy(
            update={"left": _prune(node.left, confidence), "right": _prune(node.right, confidence)}
        )
    subtree = sum(_estimated_errors(leaf, confidence) for leaf in node.leaves())
    if _estimated_errors(node, confidence) <= subtree + _GAIN_SLACK:
        return TreeNode(kind="leaf", counts=list(node.counts), label=node.label)
    return node


def prune_pessimistic(tree: DecisionTree, confidence: float = 0.25) -> DecisionTree:
    """Collapse subtrees whose leaves' error bound is no better than a single leaf's."""

    if not 0.0 < confidence < 1.0:
        raise ParameterError("confidence must lie in (0, 1)")
    root = _prune(tree.root, confidence)
    logger.debug(
        "pruning: %d -> %d leaves", len(tree.root.leaves()), len(root.leaves())
    )
    return tree.model_copy(update={"root": root, "pruned": True})


def train_tree(train: Dataset, config: LearnerConfig) -> DecisionTree:
    """Train the configured learner, pruning when enabled."""

    if config.kind == "id3":
        tree = train_id3(train, config.bins)
    elif config.kind == "c45":
        tree = train_c45(train)
    else:
        tree = train_c45_beta(train, config.beta)
    if config.prune:
        tree = prune_pessimistic(tree, config.confidence)
    return tree


def classify(tree: DecisionTree, vector: FeatureVector) -> int:
    """Descend from the root to a leaf; unseen ID3 bins take the node's majority."""

    values = vector.as_array()
    if tree.discretizer is not None:
        values = discretize(tree.discretizer, values)[0]
    node = tree.root
    while node.kind != "leaf":
        if node.kind == "categorical":
            child = node.branches.get(int(values[node.feature]))
            if child is None:
                return node.label
            node = child
        else:
            node = node.left if values[node.feature] <= node.threshold else node.right
    return node.label


def evaluate(tree: DecisionTree, test: Dataset) -> ConfusionMatrix:
    if not len(test):
        raise ParameterError("test set is empty")
    return ConfusionMatrix.from_pairs(
        (sample.label, classify(tree, sample.vector)) for sample in test.samples
    )


def metrics(matrix: ConfusionMatrix) -> MetricsReport:
    """Global error plus per-class recall, precision and their complements."""

    card = matrix.card
    if card == 0:
        raise ParameterError("confusion matrix is empty")
    counts = matrix.counts
    diagonal = np.diag(counts)
    rows = counts.sum(axis=1)
    columns = counts.sum(axis=0)
    recall = [float(diagonal[i] / rows[i]) if rows[i] else None for i in range(9)]
    precision = [float(diagonal[i] / columns[i]) if columns[i] else None for i in range(9)]
    off_diagonal = int(card - diagonal.sum())
    return MetricsReport(
        confusion=counts.tolist(),
        card=card,
        global_error=off_diagonal / card,
        accuracy=float(diagonal.sum()) / card,
        recall=recall,
        precision=precision,
        apriori_error=[None if r is None else 1.0 - r for r in recall],
        aposteriori_error=[None if p is None else 1.0 - p for p in precision],
    )


def repeated_holdout(
    dataset: Dataset,
    trainer: Trainer,
    repeats: int,
    train_fraction: float = 0.7,
    seed: int = 0,
) -> HoldoutReport:
    """Average test error over seeded stratified splits."""

    if repeats < 1:
        raise ParameterError("repeats must be at least 1")
    children = np.random.SeedSequence(seed).spawn(repeats)
    reports: list[MetricsReport] = []
    for child in children:
        split_seed = int(child.generate_state(1)[0])
        train, test = split_dataset(dataset, train_fraction, split_seed)
        reports.append(metrics(evaluate(trainer(train), test)))
    mean = float(np.mean([report.global_error for report in reports]))
    logger.info("repeated hold-out: %d runs, mean global error %.4f", repeats, mean)
    return HoldoutReport(reports=reports, mean_global_error=mean)


def format_confusion(report: MetricsReport) -> str:
    """Plain-text confusion table with true digits as rows."""

    header = "true\\assigned " + " ".join(f"{d:>4}" for d in DIGITS)
    lines = [header]
    for digit, row in zip(DIGITS, report.confusion):
        lines.append(f"{digit:>14} " + " ".join(f"{count:>4}" for count in row))
    lines.append(f"global error: {report.global_error:.4f}")
    return "\n".join(lines)
