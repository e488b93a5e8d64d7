"""Minimum-time attitude and orbit maneuvers of a rocket. Utils."""

from __future__ import annotations

import math
from collections.abc import Iterable

import numpy as np

from rocketmintime.exceptions import InvalidInputError


def ensure_finite(values: Iterable[float] | np.ndarray, what: str = "value") -> None:
    """Raise `InvalidInputError` if any input is NaN or infinite."""
    array = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(array)):
        raise InvalidInputError(f"Non-finite {what}: {array}")


def sat(value: float, low: float = -1.0, high: float = 1.0) -> float:
    """Saturation operator sat(low, value, high)."""
    return min(max(value, low), high)


def angle_between(u: np.ndarray, v: np.ndarray) -> float:
    """Angle in [0, pi] between two plane vectors (0 if any of them vanishes)."""
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    cross = float(u[0] * v[1] - u[1] * v[0])
    return math.atan2(abs(cross), float(np.dot(u, v)))


def deg2rad(values: Iterable[float]) -> tuple[float, ...]:
    """Convert a sequence of degrees to radians."""
    return tuple(math.radians(v) for v in values)


def rad2deg(values: Iterable[float]) -> tuple[float, ...]:
    """Convert a sequence of radians to degrees."""
    return tuple(math.degrees(v) for v in values)
