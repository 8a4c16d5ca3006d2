"""Finite-difference probes of a logit oracle."""

from typing import Optional, Sequence

import numpy as np

from .. import config
from .errors import DimensionMismatchError
from .oracle import OracleHandle

EPS = np.finfo(np.float64).eps


def line_eval(oracle: OracleHandle, u: np.ndarray, v: np.ndarray, t: float) -> np.ndarray:
    """L(t; u, v) = O_L(u + t v)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionMismatchError("line direction length", u.shape, v.shape)
    if not np.any(v):
        raise ValueError("line direction must be nonzero")
    return oracle.query(u + t * v)


def first_diff(
    oracle: OracleHandle, u: np.ndarray, v: np.ndarray, t: float, step: float
) -> np.ndarray:
    """Forward difference (L(t+step) - L(t)) / step, per output coordinate."""
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    return (line_eval(oracle, u, v, t + step) - line_eval(oracle, u, v, t)) / step


def noise_floor(scale: float, step: float) -> float:
    """Magnitude below which a second difference is float64 rounding noise."""
    return config.FD_NOISE_FACTOR * EPS * max(1.0, scale) / step


def second_diff(
    oracle: OracleHandle,
    x: np.ndarray,
    direction: np.ndarray,
    step: float,
    center: Optional[np.ndarray] = None,
) -> np.ndarray:
    """slope_right - slope_left along `direction` at x.

    At a critical point of neuron i this is a1[:, i] * |a0[i] . direction|.
    Passing the cached `center` logits saves one query.
    """
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    x = np.asarray(x, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    if center is None:
        center = oracle.query(x)
    right = oracle.query(x + step * direction)
    left = oracle.query(x - step * direction)
    return ((right - center) - (center - left)) / step


def kink_detected(diff: np.ndarray, center: np.ndarray, step: float) -> bool:
    """False when the slopes agree to within the rounding floor."""
    floor = noise_floor(float(np.max(np.abs(center))), step)
    return bool(np.max(np.abs(diff)) > floor)


def adaptive_step(
    t: float,
    others: Sequence[float],
    v_norm: float,
    step_max: float = config.FD_STEP_MAX,
    step_min: float = config.FD_STEP_MIN,
) -> float:
    """min(step_max, 0.1 x distance to the nearest other kink on the line), floored."""
    step = step_max
    gaps = [abs(t - s) * v_norm for s in others if s != t]
    if gaps:
        step = min(step, config.FD_STEP_FRACTION * min(gaps))
    return max(step, step_min)


class ProbeSite:
    """Second differences around one point, sharing the center query."""

    def __init__(self, oracle: OracleHandle, x: np.ndarray, center: Optional[np.ndarray] = None):
        self.oracle = oracle
        self.x = np.asarray(x, dtype=np.float64)
        self._center = None if center is None else np.asarray(center, dtype=np.float64)

    @property
    def center(self) -> np.ndarray:
        if self._center is None:
            self._center = self.oracle.query(self.x)
        return self._center

    @property
    def scale(self) -> float:
        return float(np.max(np.abs(self.center)))

    def basis(self, j: int) -> np.ndarray:
        e = np.zeros_like(self.x)
        e[j] = 1.0
        return e

    def second_diff(self, direction: np.ndarray, step: float) -> np.ndarray:
        return second_diff(self.oracle, self.x, direction, step, center=self.center)

    def floor(self, step: float) -> float:
        return noise_floor(self.scale, step)
