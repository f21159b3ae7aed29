"""Input checks shared by the decoders."""
from __future__ import annotations

import numpy as np


def check_finite_scores(values, name: str = "scores") -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name}: expected a non-empty 1-d array")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"invalid score in {name}")
    return arr


def check_probabilities(values, n: int | None = None, name: str = "probs") -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name}: expected a 1-d array")
    if n is not None and arr.size != n:
        raise ValueError(f"{name}: expected {n} values, got {arr.size}")
    if np.any(np.isnan(arr)) or np.any(arr < 0) or np.any(arr > 1):
        raise ValueError(f"{name}: values must lie in [0, 1]")
    return arr


def check_same_length(a, b, what: str = "inputs") -> None:
    if len(a) != len(b):
        raise ValueError(f"{what} have different lengths: {len(a)} != {len(b)}")
