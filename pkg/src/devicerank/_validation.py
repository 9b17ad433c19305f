"""Small argument and array checks shared by the estimators and functions."""

from __future__ import annotations

import math

import numpy as np

from .exceptions import ContractError


def check_fraction(value, name="fraction"):
    if not isinstance(value, (int, float)) or isinstance(value, bool) or math.isnan(value):
        raise ValueError(f"{name} must be a number in (0, 1], got {value!r}")
    if not 0 < value <= 1:
        raise ValueError(f"{name} must lie in (0, 1], got {value!r}")
    return float(value)


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_vector(vector, dim=None, name="vector"):
    arr = np.asarray(vector, dtype=np.float64)
    if arr.ndim != 1:
        raise ContractError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ContractError(f"{name} has dim {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} has non-finite components")
    return arr


def check_texts(X):
    """Accept a single string or an iterable of strings; always return a list."""
    if isinstance(X, str):
        raise ValueError("expected an iterable of strings, got a single string")
    texts = list(X)
    for i, t in enumerate(texts):
        if not isinstance(t, str):
            raise ValueError(f"element {i} is {type(t).__name__}, expected str")
    return texts
