"""Shared input-validation helpers used across the package."""

import numpy as np


def check_same_shape(a, b, names=("first", "second")):
    """Raise ValueError if two arrays differ in shape."""
    if np.shape(a) != np.shape(b):
        raise ValueError(
            f"shape mismatch: {names[0]} has {np.shape(a)}, {names[1]} has {np.shape(b)}"
        )


def check_binary(mask, name="mask"):
    """Raise ValueError unless every element of `mask` is 0 or 1."""
    arr = np.asarray(mask)
    bad = ~((arr == 0) | (arr == 1))
    if bad.any():
        raise ValueError(f"{name} must be binary (0/1); found value {arr[bad].flat[0]!r}")


def check_finite(arr, name="array"):
    """Raise ValueError if `arr` contains NaN or infinity."""
    a = np.asarray(arr, dtype=float)
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite values")


def as_grid(arr, name="grid"):
    """Coerce to a float64 2-D numpy array."""
    a = np.asarray(arr, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got ndim={a.ndim}")
    return a
