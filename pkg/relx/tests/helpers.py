"""Shared builders and reference implementations for the relx tests."""

from bisect import bisect_left
from typing import List, Optional, Sequence, Tuple

import numpy as np

from relx.adapters.oracles.base import LogitBackend
from relx.adapters.oracles.local import LocalBackend
from relx.core.models import QueryLedger, TwoLayerNet
from relx.core.network import random_net
from relx.core.oracle import OracleHandle


def victim(d: int, h: int, k: int, seed: int) -> TwoLayerNet:
    return random_net(d, h, k, np.random.default_rng(seed))


def local_oracle(net: TwoLayerNet, ledger: Optional[QueryLedger] = None) -> OracleHandle:
    return OracleHandle(LocalBackend(net), ledger=ledger)


def reference_logits(net: TwoLayerNet, x: Sequence[float]) -> List[float]:
    """Plain-loop forward pass, independent of numpy's matmul."""
    hidden = []
    for i in range(net.h):
        total = float(net.b0[i])
        for j in range(net.d):
            total += float(net.a0[i, j]) * float(x[j])
        hidden.append(max(total, 0.0))
    logits = []
    for c in range(net.k):
        total = float(net.b1[c])
        for i in range(net.h):
            total += float(net.a1[c, i]) * hidden[i]
        logits.append(total)
    return logits


def _subset_sums(values: Sequence[int], offset: int) -> List[Tuple[int, List[int]]]:
    sums = [(0, [])]
    for n, v in enumerate(values):
        sums += [(s + v, idx + [offset + n]) for s, idx in sums]
    return sums


def subset_in_window(values: Sequence[int], target: int, p: int) -> Optional[List[int]]:
    """Meet-in-the-middle: indices of a subset with |sum - target| < p / 2.

    Works on doubled integers so the open window has no rounding.
    """
    half = len(values) // 2
    left = _subset_sums(values[:half], 0)
    right = sorted(_subset_sums(values[half:], half))
    right_sums = [s for s, _ in right]
    for s, idx in left:
        low = (2 * (target - s) - p) // 2 + 1  # smallest r with 2r > 2(T - s) - p
        high = -((-(2 * (target - s) + p)) // 2) - 1  # largest r with 2r < 2(T - s) + p
        i = bisect_left(right_sums, low)
        if i < len(right_sums) and right_sums[i] <= high:
            return sorted(idx + right[i][1])
    return None


class CorruptFirstAnswer(LogitBackend):
    """Local backend whose first answer is shifted by `offset`."""

    def __init__(self, net: TwoLayerNet, offset: float = 1.0):
        self.inner = LocalBackend(net)
        self.offset = offset
        self.calls = 0

    @property
    def input_dim(self) -> Optional[int]:
        return self.inner.input_dim

    def logits(self, x: np.ndarray) -> np.ndarray:
        self.calls += 1
        out = self.inner.logits(x)
        return out + self.offset if self.calls == 1 else out


class FailingBackend(LogitBackend):
    """Raises on every query."""

    def __init__(self, error: Exception):
        self.error = error

    def logits(self, x: np.ndarray) -> np.ndarray:
        raise self.error
