"""Dense vector arithmetic and the statistical kernels the detectors use.

A "parameter vector" is a flat float64 ``numpy`` array. Functions here are
pure; none of them mutate their inputs.
"""

import numpy as np

from ._validation import as_matrix, as_pair, as_vector
from .exceptions import InsufficientHistoryError

#: Norms below this are treated as the zero vector by :func:`cosine_similarity`.
ZERO_NORM = 1e-12


def dot(a, b):
    a, b = as_pair(a, b)
    return float(a @ b)


def norm(a):
    return float(np.linalg.norm(as_vector(a)))


def cosine_similarity(a, b):
    """Cosine of the angle between ``a`` and ``b``.

    Returns 0.0 when either vector is (numerically) zero: a zero update has
    no direction, so it must never look like an opposing one.
    """
    a, b = as_pair(a, b)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na < ZERO_NORM or nb < ZERO_NORM:
        return 0.0
    return float(np.clip((a @ b) / (na * nb), -1.0, 1.0))


def euclidean_distance(a, b):
    a, b = as_pair(a, b)
    return float(np.linalg.norm(a - b))


def mean_coordinate_variance(window):
    """Mean over coordinates of the population variance across ``window``.

    ``window`` is a sequence of at least two equal-length vectors (or an
    ``(n, p)`` array). Variance is taken along the history axis with
    denominator ``n``.
    """
    H = as_matrix(window, name="window")
    if H.shape[0] < 2:
        raise InsufficientHistoryError(
            f"window needs at least 2 vectors, got {H.shape[0]}"
        )
    return float(np.mean(np.var(H, axis=0)))


# Row-wise kernels over (n, p) stacks. The detectors run these on every
# client at once so per-round cost stays a handful of numpy calls.


def row_norms(X):
    return np.linalg.norm(X, axis=1)


def row_cosine(X, g):
    """Cosine of every row of ``X`` with ``g``; zero-norm rows give 0."""
    nx = row_norms(X)
    ng = np.linalg.norm(g)
    out = np.zeros(X.shape[0])
    if ng < ZERO_NORM:
        return out
    ok = nx >= ZERO_NORM
    out[ok] = (X[ok] @ g) / (nx[ok] * ng)
    return np.clip(out, -1.0, 1.0)


def window_variance(H):
    """Per-client mean coordinate variance of a ``(w, n, p)`` history stack."""
    if H.shape[0] < 2:
        raise InsufficientHistoryError(
            f"window needs at least 2 vectors, got {H.shape[0]}"
        )
    return np.var(H, axis=0).mean(axis=1)
