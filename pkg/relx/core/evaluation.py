"""Fidelity, weight precision and adversarial transfer metrics."""

import logging
from typing import List, Optional, Union

import numpy as np
from pydantic import BaseModel

from .. import config
from .errors import DimensionMismatchError
from .models import (
    AlignmentResult,
    AttackConfig,
    Phase,
    PrecisionReport,
    TwoLayerNet,
)
from .network import forward_batch, forward_logits, input_jacobian, softmax
from .oracle import OracleHandle

logger = logging.getLogger(__name__)

Model = Union[TwoLayerNet, OracleHandle]


def model_logits(model: Model, xs: np.ndarray) -> np.ndarray:
    if isinstance(model, TwoLayerNet):
        return forward_batch(model, xs)
    return model.query_batch(xs, phase=Phase.EVAL)


def predict_labels(model: Model, xs: np.ndarray) -> np.ndarray:
    """argmax labels; ties go to the lowest class index."""
    return np.argmax(model_logits(model, xs), axis=1)


def uniform_inputs(
    d: int,
    n: int,
    seed: int,
    low: float = config.INPUT_LOW,
    high: float = config.INPUT_HIGH,
) -> np.ndarray:
    return np.random.default_rng(seed).uniform(low, high, size=(n, d))


def fidelity(
    net_a: TwoLayerNet,
    b: Model,
    n: int = config.FIDELITY_SAMPLES,
    seed: int = 0,
    inputs: Optional[np.ndarray] = None,
    low: float = config.INPUT_LOW,
    high: float = config.INPUT_HIGH,
) -> float:
    """Share of inputs where both models pick the same label.

    Inputs default to n uniform draws from the box; pass `inputs` to use a
    test set instead.
    """
    if inputs is None:
        inputs = uniform_inputs(net_a.d, n, seed, low, high)
    if inputs.shape[0] == 0:
        raise ValueError("fidelity needs at least one input")
    agree = predict_labels(net_a, inputs) == predict_labels(b, inputs)
    return float(np.mean(agree))


def max_logit_gap(net_a: TwoLayerNet, b: Model, xs: np.ndarray) -> float:
    """Largest |logit difference| relative to the largest |logit| in the batch."""
    la, lb = forward_batch(net_a, xs), model_logits(b, xs)
    scale = max(float(np.max(np.abs(la))), 1e-300)
    return float(np.max(np.abs(la - lb))) / scale


def _bits(error: np.ndarray) -> np.ndarray:
    """-log2 of a relative error, capped at the float64 mantissa."""
    ceiling = float(config.PRECISION_BITS_CEILING)
    with np.errstate(divide="ignore"):
        bits = -np.log2(error)
    return np.clip(bits, 0.0, ceiling)


def _histogram(bits: np.ndarray) -> List[int]:
    counts = np.bincount(
        np.floor(bits).astype(int), minlength=config.PRECISION_BITS_CEILING + 1
    )
    return [int(c) for c in counts]


def align(victim: TwoLayerNet, extracted: TwoLayerNet) -> AlignmentResult:
    """Match every victim neuron to an extracted one by |cosine| of [row, bias].

    Greedy on the similarity matrix, ties broken by bias agreement. Rows with
    norm below the dead-row threshold take no part.
    """
    if victim.d != extracted.d or victim.k != extracted.k:
        raise DimensionMismatchError(
            "(d, K)", (victim.d, victim.k), (extracted.d, extracted.k)
        )
    v_aug = np.hstack([victim.a0, victim.b0[:, None]])
    e_aug = np.hstack([extracted.a0, extracted.b0[:, None]])
    v_live = np.linalg.norm(victim.a0, axis=1) >= config.DEAD_ROW_NORM
    e_live = np.linalg.norm(extracted.a0, axis=1) >= config.DEAD_ROW_NORM

    v_norm = np.maximum(np.linalg.norm(v_aug, axis=1), 1e-300)
    e_norm = np.maximum(np.linalg.norm(e_aug, axis=1), 1e-300)
    similarity = np.abs(v_aug @ e_aug.T) / np.outer(v_norm, e_norm)
    similarity[~v_live, :] = 0.0
    similarity[:, ~e_live] = 0.0

    pairs = []
    for i in np.flatnonzero(v_live):
        for j in np.flatnonzero(e_live):
            scale = float(v_aug[i] @ e_aug[j]) / float(e_aug[j] @ e_aug[j])
            bias_gap = abs(victim.b0[i] - scale * extracted.b0[j])
            pairs.append((-round(float(similarity[i, j]), 12), bias_gap, int(i), int(j)))
    pairs.sort()

    h = victim.h
    permutation: List[Optional[int]] = [None] * h
    scales = [0.0] * h
    signs = [0] * h
    cosines = [0.0] * h
    residuals = [0.0] * h
    taken = set()
    for neg_sim, _, i, j in pairs:
        if permutation[i] is not None or j in taken:
            continue
        if -neg_sim < config.UNMATCHED_COSINE:
            break
        s = float(v_aug[i] @ e_aug[j]) / float(e_aug[j] @ e_aug[j])
        permutation[i] = j
        taken.add(j)
        scales[i] = 1.0 / abs(s)
        signs[i] = 1 if s > 0 else -1
        cosines[i] = float(similarity[i, j])
        residuals[i] = float(np.linalg.norm(s * e_aug[j] - v_aug[i]))

    unmatched = sum(1 for i in np.flatnonzero(v_live) if permutation[i] is None)
    if unmatched:
        logger.warning(f"{unmatched} victim neurons have no extracted match")
    return AlignmentResult(
        permutation=permutation,
        scales=scales,
        signs=signs,
        cosines=cosines,
        residual_norms=residuals,
        unmatched=unmatched,
        similarity=similarity,
    )


def weight_bits(
    victim: TwoLayerNet, extracted: TwoLayerNet, alignment: AlignmentResult
) -> np.ndarray:
    """Bits of precision of every nonzero entry of every matched [row, bias]."""
    v_aug = np.hstack([victim.a0, victim.b0[:, None]])
    e_aug = np.hstack([extracted.a0, extracted.b0[:, None]])
    bits = []
    for i, j in enumerate(alignment.permutation):
        if j is None:
            continue
        s = alignment.signs[i] / alignment.scales[i]
        target = v_aug[i]
        nonzero = target != 0
        error = np.abs(s * e_aug[j][nonzero] - target[nonzero]) / np.abs(target[nonzero])
        bits.append(_bits(error))
    return np.concatenate(bits) if bits else np.zeros(0)


def logit_gap_bits(
    victim: TwoLayerNet, extracted: Model, n: int = 1000, seed: int = 0
) -> np.ndarray:
    """Per input: -log2(max |logit difference| / max |logit|)."""
    xs = uniform_inputs(victim.d, n, seed)
    lv = forward_batch(victim, xs)
    le = model_logits(extracted, xs)
    scale = np.maximum(np.max(np.abs(lv), axis=1), 1e-300)
    return _bits(np.max(np.abs(lv - le), axis=1) / scale)


def align_and_precision(
    victim: TwoLayerNet, extracted: TwoLayerNet, n_logit: int = 1000, seed: int = 0
) -> PrecisionReport:
    alignment = align(victim, extracted)
    bits = weight_bits(victim, extracted, alignment)
    logit_bits = logit_gap_bits(victim, extracted, n_logit, seed)
    mean_bits = float(np.mean(bits)) if bits.size else 0.0
    logger.info(f"Mean weight precision {mean_bits:.1f} bits over {bits.size} entries")
    return PrecisionReport(
        alignment=alignment,
        mean_bits=mean_bits,
        bits_histogram=_histogram(bits),
        logit_bits_mean=float(np.mean(logit_bits)) if logit_bits.size else 0.0,
        logit_bits_histogram=_histogram(logit_bits),
    )


def input_gradient(net: TwoLayerNet, x: np.ndarray, label: int) -> np.ndarray:
    """Gradient of the cross-entropy at `label` with respect to the input."""
    jac = input_jacobian(net, x).matrix
    probs = softmax(forward_logits(net, x))
    probs[label] -= 1.0
    return jac.T @ probs


def pgd_attack(
    net: TwoLayerNet, x: np.ndarray, label: int, cfg: Optional[AttackConfig] = None
) -> np.ndarray:
    """Untargeted l-inf PGD: sign steps up the loss, projected every iteration."""
    cfg = cfg or AttackConfig()
    x = np.asarray(x, dtype=np.float64)
    if cfg.epsilon == 0 or cfg.iterations == 0:
        return x.copy()
    lower = np.maximum(x - cfg.epsilon, cfg.low)
    upper = np.minimum(x + cfg.epsilon, cfg.high)
    adv = x.copy()
    for _ in range(cfg.iterations):
        grad = input_gradient(net, adv, label)
        adv = np.clip(adv + cfg.step_size * np.sign(grad), lower, upper)
    return adv


def pgd_batch(
    net: TwoLayerNet, xs: np.ndarray, labels: np.ndarray, cfg: Optional[AttackConfig] = None
) -> np.ndarray:
    return np.vstack([pgd_attack(net, x, int(y), cfg) for x, y in zip(xs, labels)])


class TransferStats(BaseModel):
    attempted: int
    source_successful: int
    transferred: int

    @property
    def rate(self) -> float:
        if self.source_successful == 0:
            return 0.0
        return self.transferred / self.source_successful


def transfer_stats(
    source: TwoLayerNet, target: Model, points: np.ndarray, cfg: Optional[AttackConfig] = None
) -> TransferStats:
    """Attack the source; count how many of its successes also fool the target."""
    clean_source = predict_labels(source, points)
    adversarial = pgd_batch(source, points, clean_source, cfg)
    fooled_source = predict_labels(source, adversarial) != clean_source
    if not np.any(fooled_source):
        logger.warning("No adversarial example succeeded on the source model")
        return TransferStats(attempted=len(points), source_successful=0, transferred=0)

    clean_target = predict_labels(target, points[fooled_source])
    adv_target = predict_labels(target, adversarial[fooled_source])
    return TransferStats(
        attempted=len(points),
        source_successful=int(np.sum(fooled_source)),
        transferred=int(np.sum(adv_target != clean_target)),
    )


def transfer_rate(
    source: TwoLayerNet, target: Model, points: np.ndarray, cfg: Optional[AttackConfig] = None
) -> float:
    return transfer_stats(source, target, points, cfg).rate
