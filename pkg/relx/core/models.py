"""Domain types for the relx toolkit."""

import threading
from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PrivateAttr,
    field_validator,
    model_validator,
)

from .. import config
from .errors import DimensionMismatchError, NonFiniteError, RankDeficientError


def frozen_array(value: Any, ndim: int, name: str) -> np.ndarray:
    """Copy `value` into a read-only float64 array of the given rank."""
    arr = np.array(value, dtype=np.float64)
    if arr.ndim != ndim:
        raise DimensionMismatchError(f"{name} rank", ndim, arr.ndim)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


class TwoLayerNet(BaseModel):
    """A d -> h -> K ReLU network, weights stored row-per-neuron.

    a0 is h x d (row i holds the incoming weights of hidden neuron i), b0 has
    length h, a1 is K x h and b1 has length K. Instances are immutable.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    a0: np.ndarray
    b0: np.ndarray
    a1: np.ndarray
    b1: np.ndarray

    @field_validator("a0", "a1", mode="before")
    @classmethod
    def _matrix(cls, value, info):
        return frozen_array(value, 2, info.field_name)

    @field_validator("b0", "b1", mode="before")
    @classmethod
    def _vector(cls, value, info):
        return frozen_array(value, 1, info.field_name)

    @model_validator(mode="after")
    def _shapes(self):
        h, d = self.a0.shape
        if self.b0.shape != (h,):
            raise DimensionMismatchError("b0 length", h, self.b0.shape[0])
        if self.a1.shape[1] != h:
            raise DimensionMismatchError("a1 columns", h, self.a1.shape[1])
        k = self.a1.shape[0]
        if self.b1.shape != (k,):
            raise DimensionMismatchError("b1 length", k, self.b1.shape[0])
        return self

    @property
    def d(self) -> int:
        return self.a0.shape[1]

    @property
    def h(self) -> int:
        return self.a0.shape[0]

    @property
    def k(self) -> int:
        return self.a1.shape[0]

    @property
    def parameter_count(self) -> int:
        return self.a0.size + self.b0.size + self.a1.size + self.b1.size

    def replace(self, **arrays: Any) -> "TwoLayerNet":
        fields = {"a0": self.a0, "b0": self.b0, "a1": self.a1, "b1": self.b1}
        fields.update(arrays)
        return TwoLayerNet(**fields)

    def assert_extractable(self) -> None:
        """Check the victim assumptions: h < d and linearly independent rows."""
        if self.h >= self.d:
            raise RankDeficientError(
                f"extraction needs h < d, got h={self.h}, d={self.d}"
            )
        rank = int(np.linalg.matrix_rank(self.a0))
        if rank != self.h:
            raise RankDeficientError(f"a0 has rank {rank}, expected {self.h}")

    def bitwise_equal(self, other: "TwoLayerNet") -> bool:
        return all(
            a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in zip(
                (self.a0, self.b0, self.a1, self.b1),
                (other.a0, other.b0, other.a1, other.b1),
            )
        )

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TwoLayerNet) and self.bitwise_equal(other)

    __hash__ = None


class LabeledDataset(BaseModel):
    """Inputs with probability-vector targets (one-hot or soft)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    inputs: np.ndarray
    targets: np.ndarray
    source: Literal["synthetic", "file", "oracle-labeled"] = "synthetic"

    @field_validator("inputs", "targets", mode="before")
    @classmethod
    def _matrix(cls, value, info):
        return frozen_array(value, 2, info.field_name)

    @model_validator(mode="after")
    def _targets_are_distributions(self):
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise DimensionMismatchError(
                "target count", self.inputs.shape[0], self.targets.shape[0]
            )
        if self.targets.size:
            if np.any(self.targets < 0):
                raise ValueError("targets must be nonnegative")
            if np.max(np.abs(self.targets.sum(axis=1) - 1.0)) > 1e-9:
                raise ValueError("every target must sum to 1 within 1e-9")
        return self

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def d(self) -> int:
        return self.inputs.shape[1]

    @property
    def k(self) -> int:
        return self.targets.shape[1]

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.targets, axis=1)


class Phase(str, Enum):
    """Query accounting phases of the extraction attack."""

    SEARCH = "search"
    WEIGHT_RECOVERY = "weight_recovery"
    GLOBAL_SIGN = "global_sign"
    LAST_LAYER = "last_layer"
    EVAL = "eval"
    OTHER = "other"


class QueryLedger(BaseModel):
    """Per-phase query counters; totals are derived, counters only grow."""

    search: int = 0
    weight_recovery: int = 0
    global_sign: int = 0
    last_layer: int = 0
    eval: int = 0
    other: int = 0

    _lock: threading.Lock = PrivateAttr(default_factory=threading.Lock)

    def record(self, phase: Phase, count: int = 1) -> None:
        if count < 0:
            raise ValueError("query counts never decrease")
        with self._lock:
            setattr(self, phase.value, getattr(self, phase.value) + count)

    def count(self, phase: Phase) -> int:
        return getattr(self, phase.value)

    @property
    def total(self) -> int:
        return sum(getattr(self, p.value) for p in Phase)

    def snapshot(self) -> Dict[str, int]:
        with self._lock:
            counts = {p.value: getattr(self, p.value) for p in Phase}
        counts["total"] = sum(counts.values())
        return counts


class CriticalPoint(BaseModel):
    """An input where exactly one hidden preactivation is (approximately) zero."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    x: np.ndarray
    u: np.ndarray
    v: np.ndarray
    t: float
    confidence: float = Field(..., description="Residual of the 2-linearity check")
    step: float = config.FD_STEP_MAX
    logits: Optional[np.ndarray] = None

    @property
    def line(self) -> Tuple[np.ndarray, np.ndarray, float]:
        return self.u, self.v, self.t


class RecoveredNeuron(BaseModel):
    """A first-layer row recovered from one critical point.

    The row is normalized so its pivot coordinate is +1 (before global sign
    recovery) or +-1 (after).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    row: np.ndarray
    bias: float
    pivot: int
    global_sign: Optional[int] = None
    source: CriticalPoint
    noise_ratio: float = 0.0
    step_disagreement: float = 0.0
    low_confidence: bool = False

    @property
    def confidence_bits(self) -> float:
        """Bits left after the rounding floor and the two-step disagreement."""
        worst = max(self.noise_ratio, self.step_disagreement)
        if worst <= 0:
            return float(config.PRECISION_BITS_CEILING)
        return float(min(config.PRECISION_BITS_CEILING, -np.log2(worst)))

    def preactivation(self, x: np.ndarray) -> float:
        return float(self.row @ x + self.bias)


class ExtractionConfig(BaseModel):
    seed: int = 0
    search_budget: Optional[int] = Field(None, gt=0)
    max_lines: int = Field(config.SEARCH_MAX_LINES, gt=0)
    fd_step_max: float = Field(config.FD_STEP_MAX, gt=0)
    fd_step_min: float = Field(config.FD_STEP_MIN, gt=0)
    tau_abs: float = Field(config.TWO_LINEAR_TAU_ABS, gt=0)
    tau_rel: float = Field(config.TWO_LINEAR_TAU_REL, gt=0)
    window_divisor: int = Field(config.SWEEP_WINDOW_DIVISOR, ge=5)
    max_depth: int = Field(config.SWEEP_MAX_DEPTH, gt=0)
    dedupe_tol: float = Field(config.DEDUPE_COSINE_TOL, gt=0)
    global_sign_retries: int = Field(config.GLOBAL_SIGN_RETRIES, ge=0)
    last_layer_extra: int = Field(config.LAST_LAYER_EXTRA_PROBES, ge=0)

    def budget_for(self, h: int) -> int:
        if self.search_budget is not None:
            return self.search_budget
        return int(config.SEARCH_BUDGET_FACTOR * h * max(1.0, np.log2(max(h, 2))))


class ExtractionReport(BaseModel):
    """Everything an extraction run produced, partial or complete."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    net: Optional[TwoLayerNet] = None
    ledger: Dict[str, int]
    neurons: List[RecoveredNeuron] = []
    confidence_bits: List[float] = []
    low_confidence: List[bool] = []
    neurons_found: int = 0
    shortfall: int = 0
    lines_swept: int = 0
    last_layer_residual: Optional[float] = None

    def summary(self, d: int, h: int) -> Dict[str, Any]:
        total = self.ledger.get("total", 0)
        return {
            "ledger": dict(self.ledger),
            "queries_per_dh": total / float(d * h),
            "neurons_found": self.neurons_found,
            "shortfall": self.shortfall,
            "lines_swept": self.lines_swept,
            "confidence_bits": list(self.confidence_bits),
            "low_confidence": list(self.low_confidence),
            "last_layer_residual": self.last_layer_residual,
        }


class RefinementConfig(BaseModel):
    learning_rate: float = Field(config.REFINE_LEARNING_RATE, gt=0)
    iterations: int = Field(config.REFINE_ITERATIONS, gt=0)
    batch_size: int = Field(0, ge=0, description="0 means full batch")
    dataset_size: int = Field(config.REFINE_DATASET_SIZE, gt=0)
    low: float = config.INPUT_LOW
    high: float = config.INPUT_HIGH
    tolerance: float = Field(config.REFINE_TOLERANCE, gt=0)
    scalar_bias: bool = False
    seed: int = 0
    max_restarts: int = Field(config.REFINE_MAX_RESTARTS, ge=0)

    @model_validator(mode="after")
    def _box(self):
        if not self.low < self.high:
            raise ValueError("input box needs low < high")
        return self


class RefinementResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    net: TwoLayerNet
    initial_objective: float
    final_objective: float
    iterations: int
    restarts: int
    learning_rate: float


class TrainConfig(BaseModel):
    d: int = Field(..., gt=0)
    h: int = Field(..., gt=0)
    k: int = Field(..., gt=0)
    optimizer: Literal["sgd", "adam"] = "sgd"
    learning_rate: float = Field(config.TRAIN_LEARNING_RATE, ge=0)
    batch_size: int = Field(config.TRAIN_BATCH_SIZE, gt=0)
    epochs: int = Field(config.TRAIN_EPOCHS, ge=0)
    init_seed: int = 0
    shuffle_seed: int = 0
    temperature: float = Field(1.0, gt=0)


class TrainingResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    net: TwoLayerNet
    final_loss: float
    accuracy: float
    losses: List[float] = []


class RectangleSpec(BaseModel):
    """Axis-aligned box in [0,1]^d constrained in k coordinates."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    a: np.ndarray
    b: np.ndarray
    p: int = Field(..., gt=0)

    @field_validator("a", "b", mode="before")
    @classmethod
    def _vector(cls, value, info):
        return frozen_array(value, 1, info.field_name)

    @model_validator(mode="after")
    def _bounds(self):
        if self.a.shape != self.b.shape:
            raise DimensionMismatchError("rectangle bounds", self.a.shape, self.b.shape)
        if np.any(self.a < 0) or np.any(self.b > 1):
            raise ValueError("rectangle bounds must lie in [0, 1]")
        if np.any(self.a > self.b):
            raise ValueError("rectangle needs a <= b elementwise")
        for i in self.active:
            if self.a[i] == self.b[i]:
                raise ValueError(f"degenerate interval on coordinate {i}")
        return self

    @property
    def d(self) -> int:
        return self.a.shape[0]

    @property
    def active(self) -> List[int]:
        return [i for i in range(self.d) if self.a[i] != 0.0 or self.b[i] != 1.0]

    @property
    def k(self) -> int:
        return len(self.active)

    @classmethod
    def from_cells(
        cls, d: int, p: int, cells: List[int], active: Optional[List[int]] = None
    ) -> "RectangleSpec":
        """One grid cell per active coordinate.

        Cell j on a coordinate is the open interval ((j-1)/p, (j+1)/p), which
        contains exactly the grid value j/p; valid cells are 1..p-1.
        """
        active = list(range(len(cells))) if active is None else list(active)
        if len(active) != len(cells):
            raise DimensionMismatchError("active indices", len(cells), len(active))
        a = np.zeros(d)
        b = np.ones(d)
        for i, j in zip(active, cells):
            if not 0 <= i < d:
                raise ValueError(f"active index {i} outside 0..{d - 1}")
            if not 1 <= j <= p - 1:
                raise ValueError(f"cell {j} outside 1..{p - 1}")
            a[i] = (j - 1) / p
            b[i] = (j + 1) / p
        return cls(a=a, b=b, p=p)


class AttackConfig(BaseModel):
    epsilon: float = Field(config.PGD_EPSILON, ge=0)
    iterations: int = Field(config.PGD_ITERATIONS, ge=0)
    step: Optional[float] = Field(None, gt=0, description="Defaults to epsilon / 10")
    low: float = config.INPUT_LOW
    high: float = config.INPUT_HIGH

    @property
    def step_size(self) -> float:
        return self.step if self.step is not None else self.epsilon / 10.0


class AlignmentResult(BaseModel):
    """Matching of extracted rows onto victim rows up to the equivalence class."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    permutation: List[Optional[int]] = Field(
        ..., description="victim neuron -> extracted neuron (None when unmatched)"
    )
    scales: List[float]
    signs: List[int]
    cosines: List[float]
    residual_norms: List[float]
    unmatched: int
    similarity: np.ndarray


class PrecisionReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    alignment: AlignmentResult
    mean_bits: float
    bits_histogram: List[int]
    logit_bits_mean: float
    logit_bits_histogram: List[int]


class AgreementRow(BaseModel):
    model_a: int
    model_b: int
    distribution: str
    agreement: float


class RunReport(BaseModel):
    command: str
    config: Dict[str, Any] = {}
    seeds: Dict[str, int] = {}
    ledger: Optional[Dict[str, int]] = None
    metrics: Dict[str, Any] = {}
    timings: Dict[str, float] = {}
    artifacts: Dict[str, str] = {}
