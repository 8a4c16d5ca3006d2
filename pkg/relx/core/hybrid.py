"""Learning-based repair of a mostly-extracted network.

The first layer stays frozen; only a bias adjustment W0 inside the ReLU and
the output layer (W1, W2) are trained, on oracle-labeled inputs, to minimize
the mean squared logit error.
"""

import logging
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.linalg import solve

from .errors import DimensionMismatchError, RefinementError
from .models import Phase, RefinementConfig, RefinementResult, TwoLayerNet
from .oracle import OracleHandle

logger = logging.getLogger(__name__)


def hyperplane_foot(net: TwoLayerNet, neuron: int) -> np.ndarray:
    """Point of neuron's hyperplane closest to the origin."""
    row = net.a0[neuron]
    norm2 = float(row @ row)
    if norm2 == 0.0:
        raise ValueError(f"neuron {neuron} has a zero row")
    return -net.b0[neuron] * row / norm2


def inject_weight_error(
    net: TwoLayerNet,
    neuron: int,
    coord: int,
    magnitude: float,
    witness: Optional[np.ndarray] = None,
) -> TwoLayerNet:
    """Perturb a0[neuron, coord] the way a single bad gradient estimate would.

    The bias is recovered from a critical point, so a wrong row entry carries
    a matching bias error: the corrupted hyperplane still passes through the
    witness point.
    """
    if not 0 <= neuron < net.h:
        raise IndexError(f"neuron {neuron} outside 0..{net.h - 1}")
    if not 0 <= coord < net.d:
        raise IndexError(f"coordinate {coord} outside 0..{net.d - 1}")
    if magnitude == 0:
        return net
    if witness is None:
        witness = hyperplane_foot(net, neuron)
    witness = np.asarray(witness, dtype=np.float64)
    if witness.shape != (net.d,):
        raise DimensionMismatchError("witness length", net.d, witness.shape)

    a0 = net.a0.copy()
    b0 = net.b0.copy()
    a0[neuron, coord] += magnitude
    b0[neuron] -= magnitude * witness[coord]
    logger.info(f"Injected error {magnitude:+.3g} at a0[{neuron}, {coord}]")
    return net.replace(a0=a0, b0=b0)


class RefinementParams(BaseModel):
    """Trainable pieces: w0 (length h, or a single scalar), w1 (K x h), w2 (K)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    w0: np.ndarray
    w1: np.ndarray
    w2: np.ndarray

    @classmethod
    def from_net(cls, net: TwoLayerNet, scalar_bias: bool = False) -> "RefinementParams":
        w0 = np.zeros(1 if scalar_bias else net.h)
        return cls(w0=w0, w1=net.a1.copy(), w2=net.b1.copy())

    def step(self, grads: "RefinementParams", lr: float) -> "RefinementParams":
        return RefinementParams(
            w0=self.w0 - lr * grads.w0,
            w1=self.w1 - lr * grads.w1,
            w2=self.w2 - lr * grads.w2,
        )

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in (self.w0, self.w1, self.w2))

    def to_net(self, net: TwoLayerNet) -> TwoLayerNet:
        return net.replace(b0=net.b0 + self.w0, a1=self.w1, b1=self.w2)


def _forward(
    net: TwoLayerNet, params: RefinementParams, xs: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    pre = xs @ net.a0.T + net.b0 + params.w0
    hidden = np.maximum(pre, 0.0)
    return pre, hidden @ params.w1.T + params.w2


def objective(
    net: TwoLayerNet, params: RefinementParams, xs: np.ndarray, ys: np.ndarray
) -> float:
    """Mean over inputs of the squared logit error."""
    _, pred = _forward(net, params, xs)
    return float(np.mean(np.sum((pred - ys) ** 2, axis=1)))


def gradient(
    net: TwoLayerNet, params: RefinementParams, xs: np.ndarray, ys: np.ndarray
) -> RefinementParams:
    pre, pred = _forward(net, params, xs)
    hidden = np.maximum(pre, 0.0)
    residual = 2.0 * (pred - ys) / xs.shape[0]
    d_pre = (residual @ params.w1) * (pre > 0)
    d_w0 = d_pre.sum(axis=0)
    if params.w0.shape[0] == 1:
        d_w0 = np.array([d_w0.sum()])
    return RefinementParams(w0=d_w0, w1=residual.T @ hidden, w2=residual.sum(axis=0))




def scaled_step(
    net: TwoLayerNet, params: RefinementParams, xs: np.ndarray, ys: np.ndarray
) -> RefinementParams:
    """Gradient rescaled by the curvature of the objective.

    (W1, W2) see the inverse of the hidden Gram matrix, so a unit step on
    them lands on the least-squares output layer for the current hidden
    layer. W0 is scaled per unit by its diagonal Gauss-Newton term.
    """
    grads = gradient(net, params, xs, ys)
    pre, _ = _forward(net, params, xs)
    n = xs.shape[0]
    design = np.hstack([np.maximum(pre, 0.0), np.ones((n, 1))])
    gram = 2.0 * design.T @ design / n
    gram += (1e-10 * np.trace(gram) / gram.shape[0] + 1e-300) * np.eye(gram.shape[0])
    joint = np.hstack([grads.w1, grads.w2[:, None]])
    out = solve(gram, joint.T, assume_a="pos").T

    curvature = 2.0 * np.mean(pre > 0, axis=0) * np.sum(params.w1**2, axis=0)
    if params.w0.shape[0] == 1:
        curvature = np.array([curvature.sum()])
    w0 = grads.w0 / (curvature + 1e-12)
    return RefinementParams(w0=w0, w1=out[:, :-1], w2=out[:, -1])


def refine(
    net: TwoLayerNet, oracle: OracleHandle, cfg: Optional[RefinementConfig] = None
) -> RefinementResult:
    """Curvature-scaled gradient descent on (W0, W1, W2) against oracle logits.

    A step that raises the full-data objective is rejected and retried from
    the same point with half the learning rate; accepted steps double it
    again, up to the configured rate. More than `max_restarts` rejections in
    a row ends the run. The objective therefore never ends above its
    starting value.
    """
    cfg = cfg or RefinementConfig()
    rng = np.random.default_rng(cfg.seed)
    xs = rng.uniform(cfg.low, cfg.high, size=(cfg.dataset_size, net.d))
    logger.info(f"Labeling {cfg.dataset_size} refinement inputs")
    ys = oracle.query_batch(xs, phase=Phase.OTHER)
    if ys.shape[1] != net.k:
        raise DimensionMismatchError("oracle output width", net.k, ys.shape[1])

    current = RefinementParams.from_net(net, cfg.scalar_bias)
    initial = objective(net, current, xs, ys)
    value = initial
    lr = cfg.learning_rate
    rejected = 0
    restarts = 0
    iteration = 0

    for iteration in range(1, cfg.iterations + 1):
        if cfg.batch_size:
            idx = rng.choice(xs.shape[0], size=min(cfg.batch_size, xs.shape[0]), replace=False)
            step = scaled_step(net, current, xs[idx], ys[idx])
        else:
            step = scaled_step(net, current, xs, ys)
        if not step.is_finite():
            raise RefinementError(f"non-finite gradient at iteration {iteration}")

        candidate = current.step(step, lr)
        trial = objective(net, candidate, xs, ys)
        if not trial <= value:
            rejected += 1
            restarts += 1
            if rejected > cfg.max_restarts:
                logger.info(f"No descent after {rejected} halvings; stopping at lr {lr:.3g}")
                break
            lr /= 2
            continue

        improvement = value - trial
        current, value = candidate, trial
        rejected = 0
        lr = min(2 * lr, cfg.learning_rate)
        if improvement < cfg.tolerance:
            break

    logger.info(f"Refinement objective {initial:.3e} -> {value:.3e} in {iteration} steps")
    return RefinementResult(
        net=current.to_net(net),
        initial_objective=initial,
        final_objective=value,
        iterations=iteration,
        restarts=restarts,
        learning_rate=lr,
    )
