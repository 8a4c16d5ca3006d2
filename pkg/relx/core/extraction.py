"""Functionally-equivalent extraction of a two-layer ReLU network.

Four phases, each charged to its own ledger counter:

1. critical point search: sweep random lines u + t v and locate the kinks of
   the piecewise-linear restriction with the 2-linearity test;
2. weight recovery: second differences at each critical point give the
   neuron's row up to a single sign;
3. global sign recovery: one three-query probe per neuron at a point where
   every hidden unit sits exactly on its kink;
4. last layer: least squares over the recovered hidden activations.
"""

import logging
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.linalg import null_space, solve_triangular

from .. import config
from .errors import (
    BudgetExhaustedError,
    DeadNeuronError,
    DimensionMismatchError,
    ExtractionError,
    RankDeficientError,
)
from .models import (
    CriticalPoint,
    ExtractionConfig,
    ExtractionReport,
    Phase,
    RecoveredNeuron,
    TwoLayerNet,
)
from .oracle import OracleHandle
from .probing import EPS, ProbeSite, adaptive_step, line_eval

logger = logging.getLogger(__name__)

FLAT_LINES_BEFORE_GIVING_UP = 8


class TwoLinearResult(BaseModel):
    kind: Literal["critical", "more_than_one", "none"]
    location: Optional[float] = None
    value: Optional[float] = None
    residual: Optional[float] = None

    @property
    def is_critical(self) -> bool:
        return self.kind == "critical"


def two_linear_test(
    f: Callable[[float], float],
    t1: float,
    t2: float,
    eps: float,
    tau_abs: float = config.TWO_LINEAR_TAU_ABS,
    tau_rel: float = config.TWO_LINEAR_TAU_REL,
) -> TwoLinearResult:
    """Locate the only kink of f on [t1, t2], or reject.

    Fits one line at each end of the range (forward difference at t1,
    backward difference at t2), intersects them and checks that f at the
    intersection equals the value both lines predict. The candidate must sit
    more than 2 eps inside the range, and f is also checked a short probe to
    each side of it: when the middle of three pieces is the steepest or the
    flattest, the two end lines meet inside an outer piece and only the
    side checks tell.
    """
    if not t1 < t2:
        raise ValueError(f"need t1 < t2, got [{t1}, {t2}]")
    if not 0 < eps < (t2 - t1) / 4:
        raise ValueError(f"need 0 < eps < (t2 - t1) / 4, got eps={eps}")

    y1, y2 = f(t1), f(t2)
    y1_eps, y2_eps = f(t1 + eps), f(t2 - eps)
    m1 = (y1_eps - y1) / eps
    m2 = (y2 - y2_eps) / eps
    scale = max(1.0, abs(y1), abs(y2), abs(y1_eps), abs(y2_eps))

    slope_floor = config.FD_NOISE_FACTOR * EPS * scale / eps
    slope_floor += config.TWO_LINEAR_SLOPE_RTOL * (abs(m1) + abs(m2))
    if abs(m1 - m2) <= slope_floor:
        return TwoLinearResult(kind="none")

    delta = (y2 - y1 - (t2 - t1) * m2) / (m1 - m2)
    x = t1 + delta
    if not t1 + 2 * eps < x < t2 - 2 * eps:
        return TwoLinearResult(kind="more_than_one", location=x)

    def off_by(t: float, expected: float) -> float:
        observed = f(t)
        tolerance = tau_abs * scale + tau_rel * (abs(observed) + abs(expected))
        return abs(observed - expected) / tolerance

    expected = y1 + m1 * delta
    residual = abs(f(x) - expected)
    if off_by(x, expected) > 1.0:
        return TwoLinearResult(kind="more_than_one", location=x, residual=residual)

    probe = min(eps, max(eps / 64, 64 * tau_abs * scale / abs(m1 - m2)))
    left_ok = off_by(x - probe, y1 + m1 * (x - probe - t1)) <= 1.0
    right_ok = off_by(x + probe, y2 + m2 * (x + probe - t2)) <= 1.0
    if not (left_ok and right_ok):
        return TwoLinearResult(kind="more_than_one", location=x, residual=residual)
    return TwoLinearResult(kind="critical", location=x, value=f(x), residual=residual)


def locate_kinks(
    f: Callable[[float], float],
    t1: float,
    t2: float,
    window_divisor: int = config.SWEEP_WINDOW_DIVISOR,
    max_depth: int = config.SWEEP_MAX_DEPTH,
    tau_abs: float = config.TWO_LINEAR_TAU_ABS,
    tau_rel: float = config.TWO_LINEAR_TAU_REL,
) -> List[Tuple[float, float]]:
    """All kinks of f on [t1, t2] as (location, residual), left to right.

    Ranges the 2-linearity test rejects are split at their midpoint.
    """
    found: List[Tuple[float, float]] = []
    stack = [(t1, t2, 0)]
    while stack:
        lo, hi, depth = stack.pop()
        result = two_linear_test(f, lo, hi, (hi - lo) / window_divisor, tau_abs, tau_rel)
        if result.kind == "none":
            continue
        if result.is_critical:
            found.append((result.location, result.residual))
            continue
        if depth >= max_depth:
            logger.debug(f"Depth cap reached on [{lo:.6g}, {hi:.6g}]")
            continue
        mid = 0.5 * (lo + hi)
        stack.append((mid, hi, depth + 1))
        stack.append((lo, mid, depth + 1))

    found.sort()
    merged: List[Tuple[float, float]] = []
    for t, residual in found:
        if merged and abs(t - merged[-1][0]) <= 1e-12 * (t2 - t1):
            continue
        merged.append((t, residual))
    return merged


class LineProbe:
    """Memoized t -> O(u + t v) along one line."""

    def __init__(
        self,
        oracle: OracleHandle,
        u: np.ndarray,
        v: np.ndarray,
        guard: Optional[Callable[[], None]] = None,
    ):
        self.oracle = oracle
        self.u = u
        self.v = v
        self.guard = guard
        self.cache: Dict[float, np.ndarray] = {}

    def __call__(self, t: float) -> np.ndarray:
        if t not in self.cache:
            if self.guard is not None:
                self.guard()
            self.cache[t] = line_eval(self.oracle, self.u, self.v, t)
        return self.cache[t]


def critical_points_on_line(
    probe: LineProbe,
    t1: float,
    t2: float,
    cfg: ExtractionConfig,
    rng: np.random.Generator,
) -> List[CriticalPoint]:
    """Kinks of a random projection of the logits along the probe's line."""
    projection = rng.normal(size=probe(t1).shape[0])
    kinks = locate_kinks(
        lambda t: float(projection @ probe(t)),
        t1,
        t2,
        cfg.window_divisor,
        cfg.max_depth,
        cfg.tau_abs,
        cfg.tau_rel,
    )
    ts = [t for t, _ in kinks]
    v_norm = float(np.linalg.norm(probe.v))
    return [
        CriticalPoint(
            x=probe.u + t * probe.v,
            u=probe.u,
            v=probe.v,
            t=t,
            confidence=residual,
            step=adaptive_step(t, ts, v_norm, cfg.fd_step_max, cfg.fd_step_min),
            logits=probe.cache.get(t),
        )
        for t, residual in kinks
    ]


class LineSweeper:
    """Sweeps random lines u + t v, t in [-h^2, h^2], for critical points."""

    def __init__(
        self,
        oracle: OracleHandle,
        h: int,
        cfg: ExtractionConfig,
        rng: np.random.Generator,
        budget: int,
    ):
        if budget <= 0:
            raise ValueError("search budget must be positive")
        if oracle.d is None:
            raise DimensionMismatchError("oracle input width", "known d", None)
        self.oracle = oracle
        self.d = oracle.d
        self.half_range = float(h * h)
        self.cfg = cfg
        self.rng = rng
        self.budget = budget
        self.start = oracle.ledger.count(Phase.SEARCH)
        self.lines = 0
        self.flat_lines = 0
        self.exhausted = False

    @property
    def spent(self) -> int:
        return self.oracle.ledger.count(Phase.SEARCH) - self.start

    def sweep(self) -> List[CriticalPoint]:
        """Critical points on one fresh line; partial if the budget runs out."""
        u = self.rng.normal(size=self.d)
        v = self.rng.normal(size=self.d)
        self.lines += 1
        probe = LineProbe(self.oracle, u, v, guard=self._check_budget)
        points: List[CriticalPoint] = []
        with self.oracle.tagged(Phase.SEARCH):
            try:
                points = critical_points_on_line(
                    probe, -self.half_range, self.half_range, self.cfg, self.rng
                )
            except BudgetExhaustedError as e:
                logger.warning(f"Search stopped on line {self.lines}: {e}")
                self.exhausted = True

        self.flat_lines = 0 if points else self.flat_lines + 1
        logger.debug(f"Line {self.lines}: {len(points)} critical points")
        return points

    def _check_budget(self) -> None:
        if self.spent >= self.budget:
            raise BudgetExhaustedError(self.spent, self.budget)


class CriticalPointSearch(BaseModel):
    points: List[CriticalPoint]
    lines: int
    shortfall: int
    exhausted: bool


def find_critical_points(
    oracle: OracleHandle,
    h_expected: int,
    budget: int,
    rng: np.random.Generator,
    cfg: Optional[ExtractionConfig] = None,
    on_line: Optional[Callable[[List[CriticalPoint]], int]] = None,
) -> CriticalPointSearch:
    """Sweep fresh lines until h_expected neurons have been witnessed.

    Without `on_line`, progress is the most kinks seen on a single line: each
    neuron crosses zero at most once along a line, so those belong to
    distinct neurons. `on_line` receives every line's points and returns the
    number of distinct neurons known so far.
    """
    cfg = cfg or ExtractionConfig()
    sweeper = LineSweeper(oracle, h_expected, cfg, rng, budget)
    points: List[CriticalPoint] = []
    found = 0
    while (
        found < h_expected
        and not sweeper.exhausted
        and sweeper.lines < cfg.max_lines
        and sweeper.flat_lines < FLAT_LINES_BEFORE_GIVING_UP
    ):
        line_points = sweeper.sweep()
        points.extend(line_points)
        found = on_line(line_points) if on_line else max(found, len(line_points))
    shortfall = max(0, h_expected - found)
    if shortfall:
        logger.warning(f"Critical point search short by {shortfall} neurons")
    return CriticalPointSearch(
        points=points, lines=sweeper.lines, shortfall=shortfall, exhausted=sweeper.exhausted
    )


class AbsRatios(BaseModel):
    """|row| of one neuron up to positive scale, from second differences."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    diffs: np.ndarray  # d x K second differences along e_j
    output: int
    pivot: int
    magnitudes: np.ndarray
    ratios: np.ndarray
    center: np.ndarray
    floor: float
    step: float

    @property
    def noise_ratio(self) -> float:
        live = self.magnitudes[self.ratios > 0]
        return float(self.floor / np.median(live)) if live.size else 1.0


def recover_abs_ratios(
    oracle: OracleHandle,
    cp: CriticalPoint,
    step: Optional[float] = None,
    pivot: Optional[int] = None,
) -> AbsRatios:
    """|a0[i, j]| / |a0[i, pivot]| for every input coordinate j.

    The pivot defaults to the coordinate with the largest second difference.
    """
    step = step or cp.step
    site = ProbeSite(oracle, cp.x, cp.logits)
    d = cp.x.shape[0]
    diffs = np.array([site.second_diff(site.basis(j), step) for j in range(d)])
    output = int(np.argmax(np.sum(np.abs(diffs), axis=0)))
    magnitudes = np.abs(diffs[:, output])
    floor = site.floor(step)
    if np.max(magnitudes) <= floor:
        raise DeadNeuronError(
            f"no second difference above the noise floor {floor:.3g} at t={cp.t:.6g}"
        )
    if pivot is None:
        pivot = int(np.argmax(magnitudes))
    elif magnitudes[pivot] <= floor:
        raise DeadNeuronError(f"pivot coordinate {pivot} is below the noise floor")
    ratios = magnitudes / magnitudes[pivot]
    ratios[magnitudes <= floor] = 0.0
    return AbsRatios(
        diffs=diffs,
        output=output,
        pivot=pivot,
        magnitudes=magnitudes,
        ratios=ratios,
        center=site.center,
        floor=floor,
        step=step,
    )


class SignedRow(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    row: np.ndarray
    low_confidence: bool = False
    ambiguous: List[int] = []


def recover_relative_signs(
    oracle: OracleHandle,
    cp: CriticalPoint,
    abs_row: AbsRatios,
    step: Optional[float] = None,
) -> SignedRow:
    """Sign every coordinate relative to the pivot with (e_pivot + e_j) probes.

    Along e_p + w e_j the kink contributes |m_p + w m_j| when the two weights
    share a sign and |m_p - w m_j| when they do not.
    """
    step = step or abs_row.step
    site = ProbeSite(oracle, cp.x, abs_row.center)
    p = abs_row.pivot
    m_p = abs_row.magnitudes[p]
    floor = abs_row.floor
    row = np.zeros_like(abs_row.ratios)
    row[p] = 1.0
    ambiguous = []

    for j in np.flatnonzero(abs_row.ratios):
        if j == p:
            continue
        m_j = abs_row.magnitudes[j]
        sign = 1.0
        decided = False
        for weight in (1.0, 2.0):
            direction = site.basis(p) + weight * site.basis(j)
            observed = abs(site.second_diff(direction, step)[abs_row.output])
            same = m_p + weight * m_j
            opposite = abs(m_p - weight * m_j)
            sign = 1.0 if abs(observed - same) <= abs(observed - opposite) else -1.0
            if same - opposite > 8 * floor:
                decided = True
                break
        if not decided:
            ambiguous.append(int(j))
        row[j] = sign * abs_row.ratios[j]

    if ambiguous:
        logger.warning(f"Ambiguous sign probes on coordinates {ambiguous}")
    return SignedRow(row=row, low_confidence=bool(ambiguous), ambiguous=ambiguous)


def recover_bias(row: np.ndarray, cp: CriticalPoint) -> float:
    """The bias that puts cp.x on the row's hyperplane."""
    return float(-(row @ cp.x))


def along_line_mismatch(
    oracle: OracleHandle, cp: CriticalPoint, abs_row: AbsRatios, row: np.ndarray
) -> float:
    """Gap between the measured and predicted kink along the sweep line.

    Normalized so that values above 1 exceed both 1e-3 relative error and the
    rounding floor. A probe that strays across a second hyperplane shows up here.
    """
    site = ProbeSite(oracle, cp.x, abs_row.center)
    direction = cp.v / np.linalg.norm(cp.v)
    observed = abs(site.second_diff(direction, abs_row.step)[abs_row.output])
    predicted = abs_row.magnitudes[abs_row.pivot] * abs(row @ direction)
    return abs(observed - predicted) / (1e-3 * predicted + 8 * abs_row.floor)


class StepCheck(BaseModel):
    """Ratios from two probe steps, extrapolated to a zero step."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    ratios: np.ndarray
    spread: float
    allowed: float

    @property
    def agrees(self) -> bool:
        return self.spread <= self.allowed


def compare_steps(coarse: AbsRatios, fine: AbsRatios) -> StepCheck:
    """Cross-check second differences taken at step s and s / 10.

    A witness off its hyperplane by delta lowers every second difference by
    the same |c| delta / s, so the change between the two steps is shared by
    all coordinates and extrapolates away. A coordinate whose probes cross
    another neuron's hyperplane changes by a different amount.
    """
    live = coarse.ratios > 0
    shift = fine.magnitudes - coarse.magnitudes
    m_p = coarse.magnitudes[coarse.pivot]
    deviation = np.abs(shift - np.median(shift[live])) / m_p
    spread = float(np.max(deviation[live]))
    allowed = config.RATIO_AGREEMENT + 8 * (coarse.floor + fine.floor) / m_p

    extrapolated = (10 * coarse.magnitudes - fine.magnitudes) / 9
    ratios = np.where(live, extrapolated / extrapolated[coarse.pivot], 0.0)
    return StepCheck(ratios=np.maximum(ratios, 0.0), spread=spread, allowed=allowed)


def recover_neuron(
    oracle: OracleHandle,
    cp: CriticalPoint,
    step: Optional[float] = None,
    step_min: float = config.FD_STEP_MIN,
) -> RecoveredNeuron:
    """Row, bias and confidence of the neuron whose kink is at cp.

    Magnitudes are measured at two steps and must agree once the common
    offset is removed; the row is also checked against one extra probe along
    the sweep line. On a disagreement the probes are repeated with a ten
    times smaller step, down to step_min.
    """
    step = step or cp.step
    while True:
        abs_row = recover_abs_ratios(oracle, cp, step)
        try:
            fine = recover_abs_ratios(oracle, cp, step / 10, pivot=abs_row.pivot)
        except DeadNeuronError:
            check = None
        else:
            check = compare_steps(abs_row, fine)
        signed = recover_relative_signs(oracle, cp, abs_row, step)
        mismatch = along_line_mismatch(oracle, cp, abs_row, signed.row)
        verified = check is not None and check.agrees and mismatch <= 1.0
        if verified or check is None or step / 10 < step_min:
            break
        logger.info(
            f"Row at t={cp.t:.6g} disagrees between steps "
            f"({check.spread:.2g}, line {mismatch:.2g}); shrinking step to {step / 10:.1g}"
        )
        step /= 10

    row = signed.row
    if check is not None and check.agrees:
        row = np.sign(row) * check.ratios
    return RecoveredNeuron(
        row=row,
        bias=recover_bias(row, cp),
        pivot=abs_row.pivot,
        source=cp,
        noise_ratio=abs_row.noise_ratio,
        step_disagreement=1.0 if check is None else check.spread,
        low_confidence=signed.low_confidence or not verified,
    )


def recenter_neuron(
    oracle: OracleHandle,
    neuron: RecoveredNeuron,
    cfg: ExtractionConfig,
    rng: np.random.Generator,
    low: float = config.INPUT_LOW,
    high: float = config.INPUT_HIGH,
) -> RecoveredNeuron:
    """Re-recover a neuron whose witness lies far from the input box.

    Row errors act as a tilt about the witness point. The replacement witness
    is the kink found along the row's normal through the box center; the
    original neuron is kept when no matching kink turns up.
    """
    d = neuron.row.shape[0]
    center = np.full(d, 0.5 * (low + high))
    if np.linalg.norm(neuron.source.x - center) <= config.RECENTER_RADIUS * np.sqrt(d):
        return neuron

    norm = float(np.linalg.norm(neuron.row))
    normal = neuron.row / norm
    foot = center - neuron.preactivation(center) / norm * normal
    half = config.RECENTER_HALF_RANGE
    # expected kink at t = 0, kept off the first split point
    points = critical_points_on_line(LineProbe(oracle, foot, normal), -half, 1.5 * half, cfg, rng)
    if not points or min(abs(p.t) for p in points) > config.RECENTER_MATCH:
        logger.info(f"No kink near the box for the neuron witnessed at t={neuron.source.t:.6g}")
        return neuron
    cp = min(points, key=lambda p: abs(p.t))

    try:
        candidate = recover_neuron(oracle, cp, step_min=cfg.fd_step_min)
    except DeadNeuronError as e:
        logger.info(f"Keeping far witness: {e}")
        return neuron
    cosine = abs(float(candidate.row @ neuron.row)) / (np.linalg.norm(candidate.row) * norm)
    if cosine < 1.0 - config.RECENTER_COSINE_TOL:
        logger.warning(f"Recentered row disagrees with the original (|cos| {cosine:.9f})")
        return neuron
    return candidate


def explains(
    neuron: RecoveredNeuron, x: np.ndarray, rtol: float = config.HYPERPLANE_MATCH_RTOL
) -> bool:
    """Whether x already lies on the neuron's hyperplane."""
    scale = np.linalg.norm(neuron.row) * np.linalg.norm(x) + abs(neuron.bias) + 1.0
    return abs(neuron.preactivation(x)) <= rtol * scale


def same_neuron(a: RecoveredNeuron, b: RecoveredNeuron, tol: float) -> bool:
    norm_a = np.linalg.norm(a.row)
    norm_b = np.linalg.norm(b.row)
    cosine = float(a.row @ b.row) / (norm_a * norm_b)
    if abs(cosine) < 1.0 - tol:
        return False
    scale = float(a.row @ b.row) / float(b.row @ b.row)
    bias_tol = max(tol, 1e-6) * (abs(a.bias) + norm_a)
    return abs(a.bias - scale * b.bias) <= bias_tol


def dedupe_neurons(
    candidates: Sequence[RecoveredNeuron], tol: float = config.DEDUPE_COSINE_TOL
) -> List[RecoveredNeuron]:
    """Merge witnesses of the same neuron, keeping the least noisy one."""
    kept: List[RecoveredNeuron] = []
    for candidate in sorted(candidates, key=lambda n: n.noise_ratio):
        if not any(same_neuron(k, candidate, tol) for k in kept):
            kept.append(candidate)
    return kept


class GlobalSigns(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    signs: np.ndarray
    ambiguous: List[int] = []
    retries: int = 0


def recover_global_signs(
    oracle: OracleHandle,
    rows: np.ndarray,
    biases: np.ndarray,
    rng: Optional[np.random.Generator] = None,
    retries: int = config.GLOBAL_SIGN_RETRIES,
) -> GlobalSigns:
    """Orientation of every recovered row.

    z solves rows . z = -biases, so every hidden unit sits on its kink; v_i
    moves unit i alone by +1. The side where the logits do not move is the
    dead side of the ReLU.
    """
    rows = np.asarray(rows, dtype=np.float64)
    biases = np.asarray(biases, dtype=np.float64)
    h, d = rows.shape
    if h >= d:
        raise RankDeficientError(f"global sign recovery needs h < d, got h={h}, d={d}")
    rank = int(np.linalg.matrix_rank(rows))
    if rank < h:
        raise RankDeficientError(f"recovered rows have rank {rank}, expected {h}")
    rng = rng or np.random.default_rng(0)

    z = np.linalg.lstsq(rows, -biases, rcond=None)[0]
    moves = np.linalg.lstsq(rows, np.eye(h), rcond=None)[0]
    kernel = null_space(rows)
    signs = np.ones(h)
    ambiguous = []
    retried = 0
    base, base_logits = z, oracle.query(z)

    for i in range(h):
        v_i = moves[:, i]
        for attempt in range(retries + 1):
            plus = oracle.query(base + v_i)
            minus = oracle.query(base - v_i)
            tol = config.GLOBAL_SIGN_RTOL * max(1.0, float(np.max(np.abs(base_logits))))
            moved_plus = float(np.max(np.abs(plus - base_logits)))
            moved_minus = float(np.max(np.abs(minus - base_logits)))
            if moved_plus <= tol < moved_minus:
                signs[i] = -1.0
                break
            if moved_minus <= tol < moved_plus:
                signs[i] = 1.0
                break
            if attempt == retries:
                signs[i] = 1.0 if moved_minus < moved_plus else -1.0
                ambiguous.append(i)
                logger.warning(f"Global sign of neuron {i} undecided after {retries} retries")
                break
            retried += 1
            logger.info(f"Global sign of neuron {i} inconclusive; perturbing base point")
            shift = kernel @ rng.normal(size=kernel.shape[1])
            shift *= (1.0 + np.linalg.norm(z)) / max(np.linalg.norm(shift), EPS)
            base = z + shift
            base_logits = oracle.query(base)

    return GlobalSigns(signs=signs, ambiguous=ambiguous, retries=retried)


class LastLayer(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    a1: np.ndarray
    b1: np.ndarray
    residual: float
    probes: int


def hidden_design(a0: np.ndarray, b0: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """[ReLU(a0 x + b0), 1] per row of xs."""
    act = np.maximum(xs @ a0.T + b0, 0.0)
    return np.hstack([act, np.ones((xs.shape[0], 1))])


def solve_last_layer(
    oracle: OracleHandle,
    a0_hat: np.ndarray,
    b0_hat: np.ndarray,
    probe_points: Sequence[np.ndarray],
    probe_logits: Optional[Sequence[Optional[np.ndarray]]] = None,
    rng: Optional[np.random.Generator] = None,
    extra: int = config.LAST_LAYER_EXTRA_PROBES,
) -> LastLayer:
    """Least-squares a1, b1 given the first layer, via a QR factorization.

    Probe logits already known (e.g. from the search) are reused; random
    probes are added until the design matrix has full column rank.
    """
    a0_hat = np.asarray(a0_hat, dtype=np.float64)
    h, d = a0_hat.shape
    rng = rng or np.random.default_rng(0)
    known = list(probe_logits) if probe_logits is not None else [None] * len(probe_points)
    xs = [np.asarray(x, dtype=np.float64) for x in probe_points]
    ys = [y if y is not None else oracle.query(x) for x, y in zip(xs, known)]
    for _ in range(extra):
        x = rng.normal(size=d)
        xs.append(x)
        ys.append(oracle.query(x))

    for _ in range(config.LAST_LAYER_MAX_ROUNDS):
        design = hidden_design(a0_hat, b0_hat, np.vstack(xs))
        if np.linalg.matrix_rank(design) == h + 1:
            break
        logger.info(f"Last-layer design rank deficient with {len(xs)} probes; adding {h + 1}")
        for _ in range(h + 1):
            x = rng.normal(size=d)
            xs.append(x)
            ys.append(oracle.query(x))
    else:
        raise RankDeficientError("last-layer design matrix stayed rank deficient")

    targets = np.vstack(ys)
    q, r = np.linalg.qr(design)
    weights = solve_triangular(r, q.T @ targets)
    residual = float(np.linalg.norm(design @ weights - targets))
    return LastLayer(
        a1=weights[:h].T.copy(), b1=weights[h].copy(), residual=residual, probes=len(xs)
    )


def extract(
    oracle: OracleHandle, d: int, h: int, cfg: Optional[ExtractionConfig] = None
) -> ExtractionReport:
    """Run all four phases against the oracle; h is the stated hidden width."""
    cfg = cfg or ExtractionConfig()
    rng = np.random.default_rng(cfg.seed)
    if oracle.d is None:
        oracle.d = d
    elif oracle.d != d:
        raise DimensionMismatchError("oracle input width", d, oracle.d)

    budget = cfg.budget_for(h)
    logger.info(f"Extracting d={d} h={h} with search budget {budget}")
    neurons: List[RecoveredNeuron] = []

    def absorb(points: List[CriticalPoint]) -> int:
        for cp in points:
            if any(explains(n, cp.x) for n in neurons):
                continue
            with oracle.tagged(Phase.WEIGHT_RECOVERY):
                try:
                    neuron = recover_neuron(oracle, cp, step_min=cfg.fd_step_min)
                    neurons.append(recenter_neuron(oracle, neuron, cfg, rng))
                except DeadNeuronError as e:
                    logger.warning(f"Skipping critical point: {e}")
        logger.info(f"{len(neurons)} neurons recovered")
        return len(neurons)

    search = find_critical_points(oracle, h, budget, rng, cfg, on_line=absorb)

    neurons = dedupe_neurons(neurons, cfg.dedupe_tol)
    partial = {"neurons": neurons, "ledger": oracle.ledger.snapshot()}
    if not neurons:
        raise ExtractionError("no critical points found", partial=partial)
    shortfall = max(0, h - len(neurons))
    if shortfall:
        logger.warning(f"Recovered {len(neurons)} of {h} neurons")

    rows = np.vstack([n.row for n in neurons])
    biases = np.array([n.bias for n in neurons])
    try:
        with oracle.tagged(Phase.GLOBAL_SIGN):
            global_signs = recover_global_signs(
                oracle, rows, biases, rng, cfg.global_sign_retries
            )
    except RankDeficientError as e:
        raise ExtractionError(f"global sign recovery failed: {e}", partial=partial)

    signs = global_signs.signs
    rows = rows * signs[:, None]
    biases = biases * signs
    neurons = [
        n.model_copy(
            update={
                "row": rows[i],
                "bias": float(biases[i]),
                "global_sign": int(signs[i]),
                "low_confidence": n.low_confidence or i in global_signs.ambiguous,
            }
        )
        for i, n in enumerate(neurons)
    ]
    partial["neurons"] = neurons

    try:
        with oracle.tagged(Phase.LAST_LAYER):
            last = solve_last_layer(
                oracle,
                rows,
                biases,
                [n.source.x for n in neurons],
                [n.source.logits for n in neurons],
                rng,
                cfg.last_layer_extra,
            )
    except RankDeficientError as e:
        raise ExtractionError(f"last layer extraction failed: {e}", partial=partial)

    net = TwoLayerNet(a0=rows, b0=biases, a1=last.a1, b1=last.b1)
    ledger = oracle.ledger.snapshot()
    logger.info(f"Extraction finished: {len(neurons)} neurons, {ledger['total']} queries")
    return ExtractionReport(
        net=net,
        ledger=ledger,
        neurons=neurons,
        confidence_bits=[n.confidence_bits for n in neurons],
        low_confidence=[n.low_confidence for n in neurons],
        neurons_found=len(neurons),
        shortfall=shortfall,
        lines_swept=search.lines,
        last_layer_residual=last.residual,
    )
