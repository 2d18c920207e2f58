"""Input validation helpers shared across the package.

All numeric entry points normalize to float64 C-order arrays and reject
non-finite values up front, so downstream kernels can assume clean input.
"""

from __future__ import annotations

import numpy as np


class NumericError(RuntimeError):
    """A computation produced a non-finite value."""


def as_array(a, name: str, ndim: int | None = None, dtype=np.float64) -> np.ndarray:
    """Coerce ``a`` to a finite, C-contiguous float64 array.

    Raises ValueError on wrong dimensionality or non-finite entries.
    """
    arr = np.ascontiguousarray(a, dtype=dtype)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_matrix(a, name: str) -> np.ndarray:
    return as_array(a, name, ndim=2)


def as_vector(a, name: str) -> np.ndarray:
    arr = as_array(a, name, ndim=1)
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    return arr


def check_shape(a: np.ndarray, shape: tuple, name: str) -> None:
    if a.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {a.shape}")


def check_positive_int(n, name: str) -> int:
    n = int(n)
    if n < 1:
        raise ValueError(f"{name} must be >= 1, got {n}")
    return n


def ensure_finite(a: np.ndarray, context: str) -> np.ndarray:
    """Raise NumericError if a computed result contains NaN/Inf."""
    if not np.all(np.isfinite(a)):
        bad = np.argwhere(~np.isfinite(np.atleast_1d(a)))
        raise NumericError(f"non-finite value produced in {context} at index {tuple(bad[0])}")
    return a
