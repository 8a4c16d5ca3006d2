"""Seed-deterministic victim training and the seed-agreement harness."""

import itertools
import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .. import config
from .errors import DimensionMismatchError, TrainingError
from .evaluation import pgd_batch, predict_labels, uniform_inputs
from .models import (
    AgreementRow,
    AttackConfig,
    LabeledDataset,
    Phase,
    TrainConfig,
    TrainingResult,
    TwoLayerNet,
)
from .network import forward_batch, random_net, softmax
from .oracle import OracleHandle

logger = logging.getLogger(__name__)

TASKS = ("gaussian", "noisy", "teacher")
CLUSTER_SPREAD = {"gaussian": 0.05, "noisy": 0.1}
NOISY_LABEL_RATE = 0.1  # Share of noisy-task labels redrawn uniformly
TEACHER_WIDTH = 16


def one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    targets = np.zeros((labels.shape[0], k))
    targets[np.arange(labels.shape[0]), labels] = 1.0
    return targets


def gen_synthetic(
    d: int,
    k: int,
    n: int,
    seed: int,
    task: str = "gaussian",
    task_seed: Optional[int] = None,
) -> LabeledDataset:
    """Desk-scale classification data in the unit box.

    ``gaussian``: K well-separated clusters; ``noisy``: wider clusters whose
    labels are partly redrawn at random, so classes overlap; ``teacher``:
    uniform inputs labeled by the argmax of a hidden random network.

    The cluster means (or hidden network) come from `task_seed` and the
    samples from `seed`, so splits drawn with one task_seed share a task.
    Without a task_seed both come from `seed`.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")
    if d <= 0 or k <= 0 or n < 0:
        raise ValueError(f"need d, K > 0 and n >= 0, got d={d}, K={k}, n={n}")
    task_rng = np.random.default_rng(seed if task_seed is None else task_seed)
    rng = task_rng if task_seed is None else np.random.default_rng(seed)

    if task == "teacher":
        teacher = random_net(d, TEACHER_WIDTH, k, task_rng)
        inputs = rng.uniform(config.INPUT_LOW, config.INPUT_HIGH, size=(n, d))
        labels = np.argmax(forward_batch(teacher, inputs), axis=1) if n else np.zeros(0, int)
    else:
        means = task_rng.uniform(0.2, 0.8, size=(k, d))
        labels = rng.integers(0, k, size=n)
        inputs = means[labels] + rng.normal(0.0, CLUSTER_SPREAD[task], size=(n, d))
        if task == "noisy":
            flip = rng.uniform(size=n) < NOISY_LABEL_RATE
            labels = np.where(flip, rng.integers(0, k, size=n), labels)

    return LabeledDataset(inputs=inputs.reshape(n, d), targets=one_hot(labels, k))


def cross_entropy(
    probs: np.ndarray, targets: np.ndarray, floor: float = config.SOFTMAX_LOG_FLOOR
) -> float:
    """Mean of -sum_k y_k log p_k, with p clamped below at `floor`."""
    if probs.shape != targets.shape:
        raise DimensionMismatchError("probability shape", targets.shape, probs.shape)
    return float(-np.mean(np.sum(targets * np.log(np.maximum(probs, floor)), axis=1)))


def init_params(cfg: TrainConfig) -> List[np.ndarray]:
    rng = np.random.default_rng(cfg.init_seed)
    return [
        rng.normal(0.0, np.sqrt(2.0 / cfg.d), size=(cfg.h, cfg.d)),
        np.zeros(cfg.h),
        rng.normal(0.0, np.sqrt(1.0 / cfg.h), size=(cfg.k, cfg.h)),
        np.zeros(cfg.k),
    ]


def loss_and_grads(
    params: Sequence[np.ndarray], xs: np.ndarray, ys: np.ndarray, temperature: float
) -> Tuple[float, List[np.ndarray]]:
    a0, b0, a1, b1 = params
    pre = xs @ a0.T + b0
    hidden = np.maximum(pre, 0.0)
    logits = hidden @ a1.T + b1
    probs = softmax(logits, temperature)
    loss = cross_entropy(probs, ys)

    d_logits = (probs - ys) / (temperature * xs.shape[0])
    d_pre = (d_logits @ a1) * (pre > 0)
    grads = [d_pre.T @ xs, d_pre.sum(axis=0), d_logits.T @ hidden, d_logits.sum(axis=0)]
    return loss, grads


class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def update(self, params: List[np.ndarray], grads: List[np.ndarray]) -> List[np.ndarray]:
        return [p - self.lr * g for p, g in zip(params, grads)]


class Adam:
    def __init__(
        self,
        lr: float,
        beta1: float = config.ADAM_BETA1,
        beta2: float = config.ADAM_BETA2,
        epsilon: float = config.ADAM_EPSILON,
    ):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m: Optional[List[np.ndarray]] = None
        self.v: Optional[List[np.ndarray]] = None

    def update(self, params: List[np.ndarray], grads: List[np.ndarray]) -> List[np.ndarray]:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            m_hat = self.m[i] / (1 - self.beta1**self.t)
            v_hat = self.v[i] / (1 - self.beta2**self.t)
            out.append(p - self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon))
        return out


def _as_net(params: Sequence[np.ndarray]) -> TwoLayerNet:
    a0, b0, a1, b1 = params
    return TwoLayerNet(a0=a0, b0=b0, a1=a1, b1=b1)


def train_victim(
    cfg: TrainConfig,
    data: LabeledDataset,
    on_epoch: Optional[Callable[[int, float], None]] = None,
) -> TrainingResult:
    """Minibatch training of a d -> h -> K network on softmax(z / T) cross-entropy.

    init_seed fixes the weights and shuffle_seed the batch order; everything
    else is single-threaded numpy, so equal seeds give bitwise-equal nets.
    """
    if data.n == 0:
        raise ValueError("cannot train on an empty dataset")
    if data.d != cfg.d:
        raise DimensionMismatchError("input width", cfg.d, data.d)
    if data.k != cfg.k:
        raise DimensionMismatchError("class count", cfg.k, data.k)

    params = init_params(cfg)
    shuffle = np.random.default_rng(cfg.shuffle_seed)
    optimizer = Adam(cfg.learning_rate) if cfg.optimizer == "adam" else Sgd(cfg.learning_rate)
    xs, ys = np.asarray(data.inputs), np.asarray(data.targets)
    losses: List[float] = []
    iteration = 0

    for epoch in range(cfg.epochs):
        order = shuffle.permutation(data.n)
        epoch_loss = 0.0
        for start in range(0, data.n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = loss_and_grads(params, xs[idx], ys[idx], cfg.temperature)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingError(f"non-finite loss {loss} in epoch {epoch}", iteration)
            params = optimizer.update(params, grads)
            epoch_loss += loss * len(idx)
            iteration += 1
        losses.append(epoch_loss / data.n)
        logger.debug(f"Epoch {epoch}: loss {losses[-1]:.4f}")
        if on_epoch:
            on_epoch(epoch, losses[-1])

    net = _as_net(params)
    probs = softmax(forward_batch(net, xs), cfg.temperature)
    final_loss = cross_entropy(probs, ys)
    accuracy = float(np.mean(np.argmax(probs, axis=1) == data.labels))
    logger.info(f"Trained h={cfg.h} victim: loss {final_loss:.4f}, accuracy {accuracy:.3f}")
    return TrainingResult(net=net, final_loss=final_loss, accuracy=accuracy, losses=losses)


def distill_labels(
    teacher: OracleHandle, inputs: np.ndarray, temperature: float = 1.0
) -> LabeledDataset:
    """Soft targets softmax(z / T) from the teacher's logits."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    inputs = np.asarray(inputs, dtype=np.float64)
    logits = teacher.query_batch(inputs, phase=Phase.OTHER)
    targets = softmax(logits, temperature)
    targets = targets / targets.sum(axis=1, keepdims=True)
    return LabeledDataset(inputs=inputs, targets=targets, source="oracle-labeled")


def agreement_experiment(
    base_cfg: TrainConfig,
    seed_grid: Sequence[Tuple[int, int]],
    train: LabeledDataset,
    test: LabeledDataset,
    n_uniform: int = 1000,
    seed: int = 0,
    attack: Optional[AttackConfig] = None,
) -> List[AgreementRow]:
    """Pairwise label agreement of models trained under different seed pairs.

    One model per (init_seed, shuffle_seed). Distributions: the held-out test
    inputs, PGD examples crafted on the first model, and uniform box inputs.
    """
    if not seed_grid:
        return []
    models = []
    for init_seed, shuffle_seed in seed_grid:
        cfg = base_cfg.model_copy(update={"init_seed": init_seed, "shuffle_seed": shuffle_seed})
        models.append(train_victim(cfg, train).net)

    distributions: Dict[str, np.ndarray] = {"test": np.asarray(test.inputs)}
    distributions["adversarial"] = pgd_batch(
        models[0], distributions["test"], predict_labels(models[0], distributions["test"]), attack
    )
    distributions["uniform"] = uniform_inputs(base_cfg.d, n_uniform, seed)

    labels = {
        name: [predict_labels(m, xs) for m in models] for name, xs in distributions.items()
    }
    rows = []
    for a, b in itertools.combinations(range(len(models)), 2):
        for name in distributions:
            agreement = float(np.mean(labels[name][a] == labels[name][b]))
            rows.append(AgreementRow(model_a=a, model_b=b, distribution=name, agreement=agreement))
    logger.info(f"Agreement table: {len(rows)} rows over {len(models)} models")
    return rows
