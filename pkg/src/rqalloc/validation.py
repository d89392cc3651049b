"""Input validation helpers shared by the estimators and functional API."""
from __future__ import annotations

import numpy as np


class RqallocError(Exception):
    """Base class for all errors raised by rqalloc."""


class ValidationError(RqallocError, ValueError):
    """Raised when an input does not satisfy an operation's preconditions."""


class NotFittedError(RqallocError, AttributeError):
    """Raised when an estimator is used before ``fit``."""


def check_samples(data, bit_depth: int, ndim: int, name: str = "data") -> np.ndarray:
    """Return ``data`` as a read-only int32 array, checking shape and range."""
    if bit_depth not in (8, 10):
        raise ValidationError(f"{name}: unsupported bit depth {bit_depth}")
    arr = np.asarray(data)
    if arr.ndim != ndim:
        raise ValidationError(f"{name}: expected {ndim}-D array, got shape {arr.shape}")
    if arr.size == 0:
        raise ValidationError(f"{name}: empty array")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise ValidationError(f"{name}: samples must be integer code values")
    arr = arr.astype(np.int32, copy=True)
    peak = (1 << bit_depth) - 1
    lo, hi = int(arr.min()), int(arr.max())
    if lo < 0 or hi > peak:
        raise ValidationError(
            f"{name}: samples out of range [0, {peak}] (found {lo}..{hi})"
        )
    arr.flags.writeable = False
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "inputs") -> None:
    if a.shape != b.shape:
        raise ValidationError(f"{what} have mismatched dimensions {a.shape} vs {b.shape}")


def check_is_fitted(estimator, attributes) -> None:
    if isinstance(attributes, str):
        attributes = [attributes]
    if not all(hasattr(estimator, attr) for attr in attributes):
        raise NotFittedError(
            f"This {type(estimator).__name__} instance is not fitted yet; call 'fit' first."
        )


def round_half_away(x) -> np.ndarray:
    """Round to nearest integer, ties away from zero (numpy rounds ties to even)."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)
