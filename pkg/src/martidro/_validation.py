"""Small input-validation helpers used by the public types and estimators."""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch


def as_vector(x, name: str = "x", dim: int | None = None) -> np.ndarray:
    """Coerce to a finite 1-D float array, optionally checking its length."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-D, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionMismatch(f"{name} must have length {dim}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_matrix(x, name: str = "x") -> np.ndarray:
    """Coerce to a finite 2-D float array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def readonly(arr: np.ndarray) -> np.ndarray:
    """Return a copy that refuses in-place writes."""
    out = np.array(arr, dtype=float, copy=True)
    out.flags.writeable = False
    return out
