"""Test configuration."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

from handdigit.schemas import HandPose, PipelineConfig  # noqa: E402
from handdigit.services.features import FeatureVector  # noqa: E402
from handdigit.services.learner import Dataset, Sample  # noqa: E402
from handdigit.services.skinclass import BinaryMask  # noqa: E402
from handdigit.services.synthgen import render_hand  # noqa: E402


@pytest.fixture
def config() -> PipelineConfig:
    return PipelineConfig()


@pytest.fixture
def render():
    """Render an upright hand of length 130 px centred on a 256 px canvas."""

    def _render(digit: int, **overrides):
        fields = {"digit": digit, "center": (128.0, 128.0), "scale": 130.0}
        fields.update(overrides)
        return render_hand(HandPose(**fields))

    return _render


@pytest.fixture
def mask_from():
    """Build a BinaryMask from rows of '#' (true) and '.' (false)."""

    def _mask(*rows: str) -> BinaryMask:
        return BinaryMask(np.array([[char == "#" for char in row] for row in rows]))

    return _mask


def toy_vector(digit: int, k: int) -> FeatureVector:
    # Conflict-free: n tells most digits apart and dist_x1 splits the rest.
    n = digit if digit <= 5 else digit - 4
    return FeatureVector(
        n=n,
        dist_x=(100.0 * digit + k, 0.0, 0.0, 0.0),
        dist_y=(0.01 * digit, 0.0, 0.0, 0.0),
    )


@pytest.fixture
def toy_dataset() -> Dataset:
    """Ten samples per digit, 90 in total."""

    return Dataset(
        tuple(Sample(toy_vector(digit, k), digit) for digit in range(1, 10) for k in range(10))
    )
