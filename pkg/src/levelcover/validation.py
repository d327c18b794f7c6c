"""Input validation helpers shared by the estimators and the CLI."""

from __future__ import annotations

import inspect

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import InvalidPolygonError, LevelCoverError
from .geometry import Polygon


# scikit-learn < 1.6 spells this keyword force_all_finite
_FINITE_KW = (
    "ensure_all_finite" if "ensure_all_finite" in inspect.signature(check_array).parameters else "force_all_finite"
)


def check_vertices(X) -> np.ndarray:
    """Coerce ``X`` to a finite float array of shape (n, 2) with n >= 3."""
    try:
        arr = check_array(X, dtype=np.float64, ensure_min_samples=3, **{_FINITE_KW: True})
    except ValueError as exc:
        raise InvalidPolygonError(str(exc)) from exc
    if arr.shape[1] != 2:
        raise InvalidPolygonError(f"vertices must have 2 columns, got {arr.shape[1]}")
    return arr


def check_polygon(X) -> Polygon:
    if isinstance(X, Polygon):
        return X
    return Polygon(check_vertices(X))


def check_points(X) -> np.ndarray:
    try:
        arr = check_array(X, dtype=np.float64, **{_FINITE_KW: True})
    except ValueError as exc:
        raise LevelCoverError(str(exc)) from exc
    if arr.shape[1] != 2:
        raise LevelCoverError(f"points must have 2 columns, got {arr.shape[1]}")
    return arr


def check_positive(name: str, value) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError) as exc:
        raise LevelCoverError(f"{name} must be a number") from exc
    if not np.isfinite(v) or v <= 0:
        raise LevelCoverError(f"{name} must be positive and finite, got {value!r}")
    return v
