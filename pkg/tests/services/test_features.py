from __future__ import annotations

import numpy as np
import pytest

from handdigit.errors import ParameterError
from handdigit.services.features import (
    FEATURE_COUNT,
    FEATURE_NAMES,
    FeatureVector,
    Histogram,
    Peak,
    default_separation,
    detect_peaks,
    feature_vector,
    local_maxima,
    project_histogram,
    smooth,
)
from handdigit.services.pipeline import extract_features
from handdigit.services.skinclass import BinaryMask


def _histogram(width: int, peaks: dict[int, float]) -> Histogram:
    bins = np.zeros(width)
    for x, y in peaks.items():
        bins[x] = y
    return Histogram(bins, 100.0)


def test_feature_layout():
    assert FEATURE_COUNT == 17
    assert FEATURE_NAMES[:2] == ("n", "dist_x1")
    assert FEATURE_NAMES[-1] == "r_y4"


def test_projection_counts_columns_over_hand_length(mask_from):
    mask = mask_from(
        "#.#.",
        "#.#.",
        "#...",
    )
    histogram = project_histogram(mask, 4.0)
    assert histogram.bins.tolist() == [0.75, 0.0, 0.5, 0.0]
    assert histogram.hand_length == 4.0


def test_projection_needs_positive_hand_length():
    with pytest.raises(ParameterError):
        project_histogram(BinaryMask.empty(3, 3), 0.0)


def test_smoothing_is_a_clamped_moving_average():
    smoothed = smooth(Histogram(np.array([0.0, 3.0, 0.0]), 1.0), 3)
    assert smoothed.bins.tolist() == pytest.approx([1.0, 1.0, 1.0])
    edge = smooth(Histogram(np.array([3.0, 0.0, 0.0]), 1.0), 3)
    assert edge.bins.tolist() == pytest.approx([2.0, 1.0, 0.0])


def test_window_of_one_leaves_the_histogram_alone():
    histogram = Histogram(np.array([1.0, 2.0]), 1.0)
    assert smooth(histogram, 1) is histogram


@pytest.mark.parametrize("window", [0, 2, 4, -1])
def test_smoothing_window_must_be_odd_and_positive(window: int):
    with pytest.raises(ParameterError):
        smooth(Histogram(np.zeros(5), 1.0), window)


def test_plateaus_report_their_leftmost_bin():
    assert local_maxima(np.array([0.0, 2.0, 2.0, 1.0])) == [Peak(1, 2.0)]
    assert local_maxima(np.array([1.0, 1.0, 1.0])) == [Peak(0, 1.0)]
    assert local_maxima(np.array([0.0, 2.0, 2.0, 3.0])) == [Peak(3, 3.0)]


def test_histogram_edges_count_as_zero():
    assert local_maxima(np.array([4.0, 1.0, 0.0, 2.0])) == [Peak(0, 4.0), Peak(3, 2.0)]


def test_three_peaks_give_distances_and_ratios():
    peaks = detect_peaks(_histogram(40, {10: 0.20, 18: 0.24, 30: 0.22}))
    assert [peak.x for peak in peaks] == [10, 18, 30]
    vector = feature_vector(peaks)
    assert vector.n == 3
    assert vector.dist_x == (8.0, 12.0, 0.0, 0.0)
    assert vector.dist_y == pytest.approx((0.04, 0.02, 0.0, 0.0))
    assert vector.r_x == pytest.approx((8 / 12, 0.0, 0.0, 0.0))
    assert vector.r_y == pytest.approx((2.0, 0.0, 0.0, 0.0))


def test_single_peak_vector_is_all_zero_after_the_count():
    vector = feature_vector(detect_peaks(_histogram(30, {15: 0.4})))
    assert vector.as_array().tolist() == [1.0] + [0.0] * 16


def test_empty_histogram_has_no_peaks():
    assert detect_peaks(_histogram(20, {})) == []
    assert feature_vector([]).as_array().tolist() == [0.0] * 17


def test_close_peaks_keep_the_taller_one():
    peaks = detect_peaks(_histogram(40, {10: 0.3, 13: 0.5, 30: 0.4}), min_separation=3)
    assert [(peak.x, peak.y) for peak in peaks] == [(13, 0.5), (30, 0.4)]


def test_equal_peaks_within_separation_keep_the_leftmost():
    peaks = detect_peaks(_histogram(40, {10: 0.5, 12: 0.5}), min_separation=3)
    assert peaks == [Peak(10, 0.5)]


def test_small_peaks_are_dropped():
    peaks = detect_peaks(_histogram(40, {10: 0.5, 30: 0.04}))
    assert [peak.x for peak in peaks] == [10]


def test_at_most_five_peaks_survive():
    heights = {5: 0.1, 12: 0.9, 19: 0.8, 26: 0.7, 33: 0.6, 40: 0.5, 47: 0.2}
    peaks = detect_peaks(_histogram(60, heights), min_separation=2)
    assert [peak.x for peak in peaks] == [12, 19, 26, 33, 40]


def test_relative_amplitude_must_be_a_fraction():
    with pytest.raises(ParameterError):
        detect_peaks(_histogram(10, {3: 1.0}), min_rel_amplitude=1.0)


def test_default_separation_is_eight_percent_of_the_width():
    assert default_separation(61) == 5
    assert default_separation(100) == 8


def test_six_peaks_do_not_fit_the_vector():
    with pytest.raises(ParameterError):
        feature_vector([Peak(x, 0.1) for x in range(0, 60, 10)])


def test_shifted_fingers_give_the_same_features():
    bits = np.zeros((20, 60), dtype=bool)
    bits[2:12, 10:15] = True
    bits[4:12, 25:30] = True
    shifted = np.roll(bits, 7, axis=1)
    first = feature_vector(detect_peaks(smooth(project_histogram(BinaryMask(bits), 50.0), 3)))
    second = feature_vector(detect_peaks(smooth(project_histogram(BinaryMask(shifted), 50.0), 3)))
    assert first == second
    assert first.n == 2


def test_vector_from_array_checks_the_count():
    values = [2.0, 3.0, 0.0, 0.0, 0.0, 0.1, 0.0, 0.0, 0.0] + [0.0] * 8
    assert FeatureVector.from_array(values).n == 2
    with pytest.raises(ParameterError):
        FeatureVector.from_array([1.5] + [0.0] * 16)
    with pytest.raises(ParameterError):
        FeatureVector.from_array([1.0] * 5)


def test_vector_rejects_out_of_range_counts():
    with pytest.raises(ParameterError):
        FeatureVector(n=6)


@pytest.mark.parametrize("digit", [2, 3, 5])
def test_rescaled_hand_keeps_its_count_and_proportions(render, config, digit: int):
    small = extract_features(render(digit, scale=110.0)[0], config)
    large = extract_features(render(digit, scale=150.0)[0], config)
    assert small.n == large.n == digit
    stretch = 150.0 / 110.0
    assert [d * stretch for d in small.dist_x] == pytest.approx(large.dist_x, rel=0.15)
    assert small.dist_y == pytest.approx(large.dist_y, abs=0.05)
    assert small.r_x == pytest.approx(large.r_x, abs=0.15)
