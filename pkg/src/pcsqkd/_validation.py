"""Small input-validation helpers used at public entry points."""

from __future__ import annotations

import math
from numbers import Integral, Real

import numpy as np

from .errors import DimensionMismatchError, InvalidArgumentError


def check_scalar(value, name, *, min_val=None, max_val=None,
                 include_min=True, include_max=True, integer=False):
    """Validate a real (or integer) scalar and return it as float/int."""
    kind = Integral if integer else Real
    if isinstance(value, bool) or not isinstance(value, kind):
        # numpy scalars register with numbers ABCs; anything else is refused
        raise InvalidArgumentError(f"{name} must be {'an integer' if integer else 'a real number'}, got {value!r}")
    value = int(value) if integer else float(value)
    if not integer and not math.isfinite(value):
        raise InvalidArgumentError(f"{name} must be finite, got {value!r}")
    if min_val is not None:
        bad = value < min_val if include_min else value <= min_val
        if bad:
            op = ">=" if include_min else ">"
            raise InvalidArgumentError(f"{name} must be {op} {min_val}, got {value}")
    if max_val is not None:
        bad = value > max_val if include_max else value >= max_val
        if bad:
            op = "<=" if include_max else "<"
            raise InvalidArgumentError(f"{name} must be {op} {max_val}, got {value}")
    return value


def check_complex_1d(x, name, *, min_length=1):
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise InvalidArgumentError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size < min_length:
        raise InvalidArgumentError(f"{name} needs at least {min_length} samples, got {arr.size}")
    arr = arr.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite values")
    return arr


def check_dual_pol(x, name, *, min_length=1):
    """Return a (2, n) complex128 array."""
    arr = np.asarray(x)
    if arr.ndim != 2 or arr.shape[0] != 2:
        raise InvalidArgumentError(f"{name} must have shape (2, n), got {arr.shape}")
    if arr.shape[1] < min_length:
        raise InvalidArgumentError(f"{name} needs at least {min_length} samples, got {arr.shape[1]}")
    arr = arr.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite values")
    return arr


def check_same_length(a, b, names=("a", "b")):
    if np.shape(a)[-1] != np.shape(b)[-1]:
        raise DimensionMismatchError(
            f"{names[0]} and {names[1]} differ in length: {np.shape(a)[-1]} vs {np.shape(b)[-1]}")
