import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from minedetect.exceptions import DimensionError, InsufficientHistoryError
from minedetect.vectors import (
    cosine_similarity,
    dot,
    euclidean_distance,
    mean_coordinate_variance,
    norm,
    row_cosine,
    window_variance,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def nonzero_vectors(p):
    return arrays(np.float64, p, elements=finite).filter(lambda a: np.linalg.norm(a) > 1e-3)


@pytest.mark.parametrize(
    "a, b, expected",
    [([1, 0], [0, 1], 0.0), ([1, 2], [3, 4], 11.0), ([0, 0, 0], [5, -2, 9], 0.0)],
)
def test_dot(a, b, expected):
    assert dot(a, b) == expected


def test_dot_length_mismatch():
    with pytest.raises(DimensionError):
        dot([1, 2], [1, 2, 3])


@pytest.mark.parametrize("a, expected", [([3, 4], 5.0), ([0, 0, 0], 0.0), ([1, 1, 1, 1], 2.0)])
def test_norm(a, expected):
    assert norm(a) == expected


@pytest.mark.parametrize(
    "a, b, expected",
    [([1, 0], [1, 0], 1.0), ([1, 2], [-1, -2], -1.0), ([1, 1], [1, 0], 1 / math.sqrt(2))],
)
def test_cosine_examples(a, b, expected):
    assert cosine_similarity(a, b) == pytest.approx(expected, abs=1e-12)


def test_cosine_zero_vector_is_neutral():
    assert cosine_similarity([0.0, 0.0], [1.0, 2.0]) == 0.0
    assert cosine_similarity([1.0, 2.0], [1e-14, 0.0]) == 0.0


@pytest.mark.parametrize(
    "a, b, expected", [([3, 4], [0, 0], 5.0), ([2, 7], [2, 7], 0.0), ([1, 1], [4, 5], 5.0)]
)
def test_euclidean_distance(a, b, expected):
    assert euclidean_distance(a, b) == expected


def test_euclidean_length_mismatch():
    with pytest.raises(DimensionError):
        euclidean_distance([1.0], [1.0, 2.0])


def test_mean_coordinate_variance_examples():
    assert mean_coordinate_variance([[0.0, 0.0]] * 5) == 0.0
    assert mean_coordinate_variance([[1.0], [2.0], [3.0], [4.0], [5.0]]) == pytest.approx(2.0)
    # {0, 2} -> 1 and {0, 4} -> 4, averaged over the two coordinates
    assert mean_coordinate_variance([[0.0, 0.0], [2.0, 4.0]]) == pytest.approx(2.5)


def test_mean_coordinate_variance_needs_two():
    with pytest.raises(InsufficientHistoryError):
        mean_coordinate_variance([[1.0, 2.0]])


def test_mean_coordinate_variance_ragged():
    with pytest.raises(DimensionError):
        mean_coordinate_variance([[1.0, 2.0], [1.0]])


@settings(max_examples=200, deadline=None)
@given(nonzero_vectors(6))
def test_cosine_self_and_negation(a):
    assert cosine_similarity(a, a) == pytest.approx(1.0, abs=1e-9)
    assert cosine_similarity(a, -a) == pytest.approx(-1.0, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(nonzero_vectors(5), nonzero_vectors(5), st.floats(1e-3, 1e3))
def test_cosine_scale_invariance(a, b, k):
    assert cosine_similarity(k * a, b) == pytest.approx(cosine_similarity(a, b), abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(*(arrays(np.float64, 4, elements=finite) for _ in range(3)))
def test_distance_metric_axioms(a, b, c):
    assert euclidean_distance(a, b) == pytest.approx(euclidean_distance(b, a), abs=1e-9)
    assert euclidean_distance(a, c) <= euclidean_distance(a, b) + euclidean_distance(b, c) + 1e-9


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (5, 3), elements=finite), st.randoms(use_true_random=False))
def test_variance_permutation_invariant(window, rnd):
    rows = list(window)
    shuffled = rows[:]
    rnd.shuffle(shuffled)
    assert mean_coordinate_variance(shuffled) == pytest.approx(
        mean_coordinate_variance(rows), rel=1e-9, abs=1e-9
    )


def test_row_kernels_agree_with_scalar_versions():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(7, 4))
    X[2] = 0.0
    g = rng.normal(size=4)
    expected = [cosine_similarity(x, g) for x in X]
    np.testing.assert_allclose(row_cosine(X, g), expected, atol=1e-12)

    H = rng.normal(size=(5, 7, 4))
    expected = [mean_coordinate_variance(H[:, i]) for i in range(7)]
    np.testing.assert_allclose(window_variance(H), expected, rtol=1e-12)
