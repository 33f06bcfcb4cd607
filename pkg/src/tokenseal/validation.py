"""Input validation helpers shared by the estimator API."""

from __future__ import annotations

import numpy as np


def as_token_array(x, name: str = "tokens") -> np.ndarray:
    """Coerce to a 1-D non-negative integer array."""
    arr = np.asarray(x)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D sequence")
    if not np.issubdtype(arr.dtype, np.integer):
        rounded = np.round(arr)
        if not np.allclose(arr, rounded):
            raise ValueError(f"{name} must contain integer token ids")
        arr = rounded
    arr = arr.astype(np.int64)
    if (arr < 0).any():
        raise ValueError(f"{name} must be non-negative token ids")
    return arr


def as_sequence_list(X) -> list[np.ndarray]:
    """Accept one sequence or a list of sequences; return a list of arrays."""
    if len(X) == 0:
        raise ValueError("X must not be empty")
    first = X[0]
    if np.isscalar(first) or (isinstance(first, np.ndarray) and first.ndim == 0):
        return [as_token_array(X)]
    return [as_token_array(row, f"X[{i}]") for i, row in enumerate(X)]


def check_key(key) -> int:
    k = int(key)
    if k < 0:
        raise ValueError("secret keys are unsigned integers")
    return k
