"""Inference, derivatives and equivalence-class transforms for TwoLayerNet."""

import logging
from typing import Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from .. import config
from .errors import DimensionMismatchError, EquivalenceError
from .models import TwoLayerNet

logger = logging.getLogger(__name__)


class Jacobian(BaseModel):
    """Input jacobian of the logits; `on_kink` marks a subgradient."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    matrix: np.ndarray
    on_kink: bool = False


def _check_input(net: TwoLayerNet, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != net.d:
        raise DimensionMismatchError("input length", net.d, x.shape)
    return x


def forward_hidden(net: TwoLayerNet, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    x = _check_input(net, x)
    preact = net.a0 @ x + net.b0
    return preact, np.maximum(preact, 0.0)


def forward_logits(net: TwoLayerNet, x: np.ndarray) -> np.ndarray:
    _, act = forward_hidden(net, x)
    return net.a1 @ act + net.b1


def forward_batch(net: TwoLayerNet, xs: np.ndarray) -> np.ndarray:
    """Logits for an n x d batch. Not bitwise tied to forward_logits."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != net.d:
        raise DimensionMismatchError("batch input width", net.d, xs.shape)
    act = np.maximum(xs @ net.a0.T + net.b0, 0.0)
    return act @ net.a1.T + net.b1


def softmax(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def forward_probs(
    net: TwoLayerNet, x: np.ndarray, temperature: float = 1.0
) -> np.ndarray:
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    return softmax(forward_logits(net, x), temperature)


def input_jacobian(net: TwoLayerNet, x: np.ndarray) -> Jacobian:
    """K x d jacobian a1 . diag(1[preact > 0]) . a0."""
    preact, _ = forward_hidden(net, x)
    on_kink = bool(np.any(np.abs(preact) < config.KINK_TOLERANCE))
    if on_kink:
        logger.warning("input_jacobian evaluated on a kink; using 1[preact>0]")
    mask = (preact > 0).astype(np.float64)
    return Jacobian(matrix=(net.a1 * mask) @ net.a0, on_kink=on_kink)


def scale_neuron(net: TwoLayerNet, i: int, c: float) -> TwoLayerNet:
    """Scale neuron i's incoming weights and bias by c > 0, its outgoing by 1/c."""
    if not c > 0:
        raise EquivalenceError(f"scale factor must be positive, got {c}")
    if not 0 <= i < net.h:
        raise IndexError(f"neuron {i} outside 0..{net.h - 1}")
    if c == 1.0:
        return net
    a0 = net.a0.copy()
    b0 = net.b0.copy()
    a1 = net.a1.copy()
    a0[i] *= c
    b0[i] *= c
    a1[:, i] /= c
    return net.replace(a0=a0, b0=b0, a1=a1)


def permute_neurons(net: TwoLayerNet, perm: Sequence[int]) -> TwoLayerNet:
    """Reorder hidden neurons so new neuron j is old neuron perm[j]."""
    perm = np.asarray(perm, dtype=int)
    if sorted(perm.tolist()) != list(range(net.h)):
        raise EquivalenceError(f"not a permutation of 0..{net.h - 1}: {perm.tolist()}")
    return net.replace(a0=net.a0[perm], b0=net.b0[perm], a1=net.a1[:, perm])


def inverse_permutation(perm: Sequence[int]) -> np.ndarray:
    perm = np.asarray(perm, dtype=int)
    inverse = np.empty_like(perm)
    inverse[perm] = np.arange(perm.shape[0])
    return inverse


def box_corners_max(row: np.ndarray, bias: float, low: np.ndarray, high: np.ndarray) -> float:
    """Max of row . x + bias over the box; attained at a corner."""
    return float(np.sum(np.where(row > 0, row * high, row * low)) + bias)


def add_dead_neuron(
    net: TwoLayerNet,
    row: np.ndarray,
    bias: float,
    low: float | np.ndarray = config.INPUT_LOW,
    high: float | np.ndarray = config.INPUT_HIGH,
) -> TwoLayerNet:
    """Append a neuron whose preactivation stays negative over the box."""
    row = np.asarray(row, dtype=np.float64)
    if row.shape != (net.d,):
        raise DimensionMismatchError("dead neuron row length", net.d, row.shape)
    low = np.broadcast_to(np.asarray(low, dtype=np.float64), (net.d,))
    high = np.broadcast_to(np.asarray(high, dtype=np.float64), (net.d,))
    peak = box_corners_max(row, bias, low, high)
    if not peak < 0:
        raise EquivalenceError(
            f"neuron is not dead on the box: max preactivation {peak:.6g}"
        )
    return net.replace(
        a0=np.vstack([net.a0, row]),
        b0=np.append(net.b0, bias),
        a1=np.hstack([net.a1, np.zeros((net.k, 1))]),
    )


def random_net(
    d: int, h: int, k: int, rng: np.random.Generator, bias_scale: float = 0.5
) -> TwoLayerNet:
    """Gaussian victim: a0 ~ N(0, 1/d), a1 ~ N(0, 1/h), biases ~ N(0, bias_scale^2/d)."""
    return TwoLayerNet(
        a0=rng.normal(0.0, 1.0 / np.sqrt(d), size=(h, d)),
        b0=rng.normal(0.0, bias_scale / np.sqrt(d), size=h),
        a1=rng.normal(0.0, 1.0 / np.sqrt(h), size=(k, h)),
        b1=rng.normal(0.0, 0.1, size=k),
    )


def zero_net(d: int, h: int, k: int) -> TwoLayerNet:
    return TwoLayerNet(
        a0=np.zeros((h, d)), b0=np.zeros(h), a1=np.zeros((k, h)), b1=np.zeros(k)
    )
