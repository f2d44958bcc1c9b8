"""Input validation helpers shared by the public functions and estimators."""

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import DimensionError


def as_vector(a, name="vector"):
    """Return ``a`` as a finite 1-D float64 array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def as_pair(a, b):
    a = as_vector(a, "a")
    b = as_vector(b, "b")
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return a, b


def as_matrix(X, name="X", min_samples=1):
    """Stack of equal-length vectors as a 2-D float64 array.

    Delegates to sklearn's ``check_array`` (finite values, 2-D) but maps
    ragged input onto :class:`DimensionError`.
    """
    if not isinstance(X, np.ndarray):
        X = list(X)
        lengths = {np.shape(x) for x in X}
        if len(lengths) > 1:
            raise DimensionError(f"{name}: vectors of unequal length {sorted(lengths)}")
    try:
        return check_array(
            X, dtype=np.float64, ensure_min_samples=min_samples, input_name=name
        )
    except ValueError as exc:
        if "Expected 2D array" in str(exc):
            raise DimensionError(f"{name} must be 2-D") from exc
        raise
