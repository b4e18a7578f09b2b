"""Small input-validation helpers shared across estimators and metrics."""

from __future__ import annotations

import numpy as np


def as_float_array(values, name="values"):
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    return arr


def check_binary_labels(labels, name="labels"):
    arr = np.asarray(labels)
    if not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must be binary (0/1)")
    return arr.astype(np.int64)


def check_same_length(a, b, names=("scores", "labels")):
    if np.shape(a)[0] != np.shape(b)[0]:
        raise ValueError(f"{names[0]} and {names[1]} have different lengths")


def check_unit_interval(scores, name="scores"):
    arr = as_float_array(scores, name)
    if np.nanmin(arr) < 0.0 or np.nanmax(arr) > 1.0:
        raise ValueError(f"{name} must lie in [0, 1]")
    return arr


def check_finite(values, name="values"):
    arr = np.asarray(values, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr
