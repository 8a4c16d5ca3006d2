from typing import Optional

import numpy as np

from ...core.models import TwoLayerNet
from ...core.network import forward_logits
from .base import LogitBackend


class LocalBackend(LogitBackend):
    """In-process oracle around a TwoLayerNet."""

    def __init__(self, net: TwoLayerNet):
        self.net = net

    @property
    def input_dim(self) -> Optional[int]:
        return self.net.d

    def logits(self, x: np.ndarray) -> np.ndarray:
        return forward_logits(self.net, x)
