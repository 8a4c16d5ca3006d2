"""Metered access to a logit oracle."""

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from typing import TYPE_CHECKING, Iterator, Optional

import numpy as np

from ..config import QUERY_WORKERS
from .errors import DimensionMismatchError, NonFiniteError, OracleError
from .models import Phase, QueryLedger

if TYPE_CHECKING:
    from ..adapters.oracles.base import LogitBackend

logger = logging.getLogger(__name__)


class OracleHandle:
    """A backend plus the ledger its queries are charged to.

    Every successful query increments exactly one phase counter; failed
    queries are not counted. The active phase is set explicitly by callers.
    """

    def __init__(
        self,
        backend: "LogitBackend",
        ledger: Optional[QueryLedger] = None,
        phase: Phase = Phase.OTHER,
        d: Optional[int] = None,
    ):
        self.backend = backend
        self.ledger = ledger if ledger is not None else QueryLedger()
        self._phase = phase
        self._phase_lock = threading.Lock()
        self.d = d if d is not None else backend.input_dim

    @property
    def phase(self) -> Phase:
        return self._phase

    @contextmanager
    def tagged(self, phase: Phase) -> Iterator["OracleHandle"]:
        """Charge queries issued inside the block to `phase`."""
        with self._phase_lock:
            previous, self._phase = self._phase, phase
        try:
            yield self
        finally:
            with self._phase_lock:
                self._phase = previous

    def _validate(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1:
            raise DimensionMismatchError("query rank", 1, x.ndim)
        if self.d is not None and x.shape[0] != self.d:
            raise DimensionMismatchError("query length", self.d, x.shape[0])
        if not np.all(np.isfinite(x)):
            raise NonFiniteError("query contains non-finite entries")
        return x

    def query(self, x: np.ndarray, phase: Optional[Phase] = None) -> np.ndarray:
        x = self._validate(x)
        logits = np.asarray(self.backend.logits(x), dtype=np.float64)
        if logits.ndim != 1:
            raise OracleError(f"oracle returned logits of shape {logits.shape}")
        self.ledger.record(phase or self._phase)
        return logits

    def query_batch(
        self, xs: np.ndarray, phase: Optional[Phase] = None, workers: int = QUERY_WORKERS
    ) -> np.ndarray:
        """Query every row; each row is counted once and answered as by query()."""
        xs = np.asarray(xs, dtype=np.float64)
        if xs.shape[0] == 0:
            return np.zeros((0, 0))
        phase = phase or self._phase
        if self.backend.concurrent and workers > 1 and xs.shape[0] > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(lambda x: self.query(x, phase), xs))
        else:
            rows = [self.query(x, phase) for x in xs]
        return np.vstack(rows)

    def close(self) -> None:
        self.backend.close()
