"""Input validation helpers.

Matrices are plain ``float64`` numpy arrays. The helpers below are thin
wrappers over :func:`sklearn.utils.check_array` that translate its errors
into this package's exception types.
"""

import numpy as np
from sklearn.utils import check_array

from .exceptions import DimensionError, NonFiniteError


def check_matrix(A, name="matrix", copy=False):
    """Validate a finite 2-D real matrix and return it as float64."""
    arr = np.asarray(A)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must be non-empty, got shape {arr.shape}")
    try:
        return check_array(
            arr,
            dtype=np.float64,
            ensure_all_finite=True,
            copy=copy,
            ensure_min_samples=1,
            ensure_min_features=1,
        )
    except ValueError as exc:
        raise NonFiniteError(f"{name}: {exc}") from exc


def check_vector(x, name="vector", length=None):
    """Validate a finite 1-D real vector, optionally of a given length."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise DimensionError(f"{name} must be a non-empty 1-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    if length is not None and arr.shape[0] != length:
        raise DimensionError(f"{name} has length {arr.shape[0]}, expected {length}")
    return arr


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or int(value) != value or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
