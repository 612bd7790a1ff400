"""Input validation helpers for the estimator-facing API."""

from __future__ import annotations

import numpy as np

from .exceptions import ValidationError


def as_lambda_array(X) -> np.ndarray:
    """Coerce sklearn-style X (m,) or (m, 1) to a 1-D positive float array."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError("expected a 1-D array of lam values (or a column)")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise ValidationError("lam values must be finite and positive")
    return arr


def as_positive_array(y, name: str, size: int | None = None) -> np.ndarray:
    arr = np.asarray(y, dtype=float).ravel()
    if size is not None and arr.size != size:
        raise ValidationError(f"{name} must have length {size}, got {arr.size}")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise ValidationError(f"{name} values must be finite and positive")
    return arr
