from abc import ABC, abstractmethod
from typing import Optional

import numpy as np


class LogitBackend(ABC):
    """Base class for logit oracle backends."""

    #: Whether batch queries should fan out across threads.
    concurrent: bool = False

    @property
    def input_dim(self) -> Optional[int]:
        """Input width when the backend knows it."""
        return None

    @abstractmethod
    def logits(self, x: np.ndarray) -> np.ndarray:
        """Return the float64 logits at x."""
        pass

    def close(self) -> None:
        pass
