"""Input validation helpers used by the public API surface."""

import numbers

import numpy as np


def check_vector(a, name="array", allow_empty=False, require_finite=True):
    """Coerce ``a`` to a 1-D float64 array and validate it."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if not allow_empty and arr.size == 0:
        raise ValueError(f"{name} must not be empty")
    if require_finite and arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_same_length(**named_arrays):
    lengths = {name: len(a) for name, a in named_arrays.items()}
    if len(set(lengths.values())) > 1:
        raise ValueError(f"length mismatch: {lengths}")


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not value > 0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return value


def check_fraction(value, name):
    if not 0.0 < value < 1.0:
        raise ValueError(f"{name} must lie strictly between 0 and 1, got {value!r}")
    return value


def check_interval(interval, name="interval"):
    """Validate a (lo, hi) pair with lo < hi; returns it as floats."""
    try:
        lo, hi = interval
    except (TypeError, ValueError):
        raise ValueError(f"{name} must be a (lo, hi) pair, got {interval!r}") from None
    lo, hi = float(lo), float(hi)
    if not lo < hi:
        raise ValueError(f"{name} must satisfy lo < hi, got ({lo}, {hi})")
    return lo, hi
