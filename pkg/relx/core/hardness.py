"""Hard instances for extraction and equivalence testing.

Rectangle networks are nonzero on a p^-k fraction of the precision-p grid,
so any extractor needs on the order of p^k queries to find where they live.
Subset-sum networks are zero everywhere on {0,1}^d unless the instance has a
solution, which makes equivalence to the zero network an NP-hard question.
"""

import logging
from fractions import Fraction
from typing import Callable, List, Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from .. import config
from .errors import DimensionMismatchError
from .models import RectangleSpec, TwoLayerNet
from .network import forward_batch

logger = logging.getLogger(__name__)

MAX_GRID_POINTS = 1 << 24
MAX_CORNER_DIM = 24


class RectangleNet(BaseModel):
    """A TwoLayerNet whose single logit is passed through one more ReLU.

    The inner network computes sum_i tent_i(x_i) - (k - 1); the final ReLU
    makes the output positive only where every tent is.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    net: TwoLayerNet
    spec: RectangleSpec

    def evaluate_batch(self, xs: np.ndarray) -> np.ndarray:
        return np.maximum(forward_batch(self.net, xs)[:, 0], 0.0)

    def __call__(self, x: np.ndarray) -> float:
        return float(self.evaluate_batch(np.atleast_2d(x))[0])


def build_rectangle_net(spec: RectangleSpec) -> RectangleNet:
    """Width-3k network for the k-rectangle spec.

    Coordinate i contributes the tent ReLU(x-a) - 2 ReLU(x-m) + ReLU(x-b),
    m the midpoint, scaled by 2 / (b - a) so its peak is exactly 1.
    """
    active = spec.active
    rows, biases, weights = [], [], []
    for i in active:
        a, b = float(spec.a[i]), float(spec.b[i])
        mid = 0.5 * (a + b)
        scale = 2.0 / (b - a)
        e = np.zeros(spec.d)
        e[i] = 1.0
        for offset, weight in ((a, 1.0), (mid, -2.0), (b, 1.0)):
            rows.append(e)
            biases.append(-offset)
            weights.append(scale * weight)

    h = len(rows)
    net = TwoLayerNet(
        a0=np.array(rows).reshape(h, spec.d),
        b0=np.array(biases, dtype=np.float64),
        a1=np.array(weights, dtype=np.float64).reshape(1, h),
        b1=np.array([-(len(active) - 1.0)]),
    )
    logger.info(f"Built rectangle net with k={len(active)} active coordinates, width {h}")
    return RectangleNet(net=net, spec=spec)


GridFunction = Union[TwoLayerNet, RectangleNet, Callable[[np.ndarray], np.ndarray]]


def _batch_values(fn: GridFunction, xs: np.ndarray) -> np.ndarray:
    if isinstance(fn, RectangleNet):
        return fn.evaluate_batch(xs)
    if isinstance(fn, TwoLayerNet):
        return np.max(np.abs(forward_batch(fn, xs)), axis=1)
    return np.asarray(fn(xs), dtype=np.float64).reshape(xs.shape[0], -1).max(axis=1)


def nonzero_fraction(
    fn: GridFunction, d: int, p: int, shard_size: int = config.GRID_SHARD_SIZE
) -> Fraction:
    """Exact share of the grid {0, 1/p, ..., (p-1)/p}^d where fn is nonzero.

    For a TwoLayerNet any nonzero logit counts; a plain callable receives an
    n x d batch and returns n values.
    """
    if d <= 0 or p <= 0:
        raise ValueError(f"need positive d and p, got d={d}, p={p}")
    total = p**d
    if total > MAX_GRID_POINTS:
        raise ValueError(f"grid of {p}^{d} points is too large to enumerate")

    count = 0
    for start in range(0, total, shard_size):
        flat = np.arange(start, min(start + shard_size, total))
        digits = np.stack(np.unravel_index(flat, (p,) * d), axis=1)
        values = _batch_values(fn, digits / p)
        count += int(np.count_nonzero(values))
    logger.debug(f"{count} of {total} grid points nonzero")
    return Fraction(count, total)


def build_subsetsum_net(v: Sequence[int], target: int, p: int) -> TwoLayerNet:
    """Three hidden units on s = v . x:

    ReLU(s - (T - p/2)) + ReLU(s - (T + p/2)) - 2 ReLU(s - T),
    a triangle that is positive exactly for s in (T - p/2, T + p/2).
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("subset-sum weights must be a nonempty vector")
    if p <= 0:
        raise ValueError(f"precision must be positive, got {p}")
    half = p / 2.0
    return TwoLayerNet(
        a0=np.vstack([v, v, v]),
        b0=np.array([-(target - half), -(target + half), -float(target)]),
        a1=np.array([[1.0, 1.0, -2.0]]),
        b1=np.zeros(1),
    )


class Equivalent(BaseModel):
    kind: Literal["equivalent"] = "equivalent"
    checked: int


class Witness(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: Literal["witness"] = "witness"
    x: np.ndarray
    gap: float

    @property
    def subset(self) -> List[int]:
        return [int(i) for i in np.flatnonzero(self.x)]


def corners(d: int, start: int, stop: int) -> np.ndarray:
    """Rows are the binary expansions of start..stop-1, bit j -> coordinate j."""
    idx = np.arange(start, stop, dtype=np.int64)
    return ((idx[:, None] >> np.arange(d, dtype=np.int64)) & 1).astype(np.float64)


def brute_force_equiv(
    net1: TwoLayerNet,
    net2: TwoLayerNet,
    d: Optional[int] = None,
    atol: float = config.EQUIVALENCE_ATOL,
    shard_size: int = config.GRID_SHARD_SIZE,
) -> Union[Equivalent, Witness]:
    """Compare the two networks on every corner of {0,1}^d."""
    d = net1.d if d is None else d
    if net1.d != d or net2.d != d:
        raise DimensionMismatchError("input width", d, (net1.d, net2.d))
    if net1.k != net2.k:
        raise DimensionMismatchError("output width", net1.k, net2.k)
    if d > MAX_CORNER_DIM:
        raise ValueError(f"{d} inputs is too many corners to enumerate")

    total = 1 << d
    for start in range(0, total, shard_size):
        xs = corners(d, start, min(start + shard_size, total))
        gaps = np.max(np.abs(forward_batch(net1, xs) - forward_batch(net2, xs)), axis=1)
        bad = np.flatnonzero(gaps > atol)
        if bad.size:
            first = int(bad[0])
            logger.info(f"Networks differ at corner {start + first}")
            return Witness(x=xs[first], gap=float(gaps[first]))
    return Equivalent(checked=total)
