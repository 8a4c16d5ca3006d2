"""Configuration settings for the relx toolkit."""

import os


def _env_float(name: str, default: float) -> float:
    value = os.getenv(name)
    return float(value) if value else default


def _env_int(name: str, default: int) -> int:
    value = os.getenv(name)
    return int(value) if value else default


# Logging
LOG_LEVEL = "INFO"  # Default; RELX_LOG_LEVEL overrides it after .env is loaded

# Network settings
KINK_TOLERANCE = 1e-12  # |preactivation| below this counts as "on the kink"
SOFTMAX_LOG_FLOOR = 1e-12  # Clamp inside log() for cross-entropy
INPUT_LOW = 0.0  # Default input box lower bound
INPUT_HIGH = 1.0  # Default input box upper bound

# Finite-difference probing
FD_STEP_MAX = _env_float("RELX_FD_STEP_MAX", 1e-4)  # Largest probe step
FD_STEP_MIN = 1e-7  # Probe step floor
FD_STEP_FRACTION = 0.1  # Fraction of the distance to the nearest other kink
FD_NOISE_FACTOR = 16.0  # Multiplier on the float64 rounding estimate

# Critical point search
TWO_LINEAR_TAU_ABS = 1e-8  # Multiplied by the logit scale of the range
TWO_LINEAR_TAU_REL = 1e-7
TWO_LINEAR_SLOPE_RTOL = 1e-10  # Relative slope equality for "no critical point"
SWEEP_WINDOW_DIVISOR = 64  # Slope window eps = range / divisor
SWEEP_MAX_DEPTH = 60  # Midpoint subdivision depth cap
SEARCH_BUDGET_FACTOR = 256  # Default search budget = factor * h * log2(h)
SEARCH_MAX_LINES = 64  # Lines swept before giving up on missing neurons

# Weight recovery
DEDUPE_COSINE_TOL = 1e-6  # |cos| >= 1 - tol merges two candidates
HYPERPLANE_MATCH_RTOL = 1e-6  # Critical point already explained by a known neuron
RATIO_AGREEMENT = 1e-9  # Allowed two-step ratio disagreement beyond the rounding floor
GLOBAL_SIGN_RTOL = 1e-6  # Logit equality tolerance in the three-query test
GLOBAL_SIGN_RETRIES = 3
LAST_LAYER_EXTRA_PROBES = 4  # Random probes added on top of the critical points
LAST_LAYER_MAX_ROUNDS = 8  # Rank-repair rounds before giving up
RECENTER_RADIUS = 2.0  # Witnesses beyond this many sqrt(d) from the box center are replaced
RECENTER_HALF_RANGE = 1.0  # Half length of the normal line searched for a replacement
RECENTER_MATCH = 1e-3  # Replacement kink must sit this close to the recovered hyperplane
RECENTER_COSINE_TOL = 1e-4

# Hybrid refinement
REFINE_DATASET_SIZE = 4096
REFINE_LEARNING_RATE = 1.0  # Fraction of the curvature-scaled step
REFINE_ITERATIONS = 500
REFINE_TOLERANCE = 1e-12
REFINE_MAX_RESTARTS = 20  # Consecutive rejected steps before giving up

# Training
TRAIN_LEARNING_RATE = 0.1
TRAIN_BATCH_SIZE = 128
TRAIN_EPOCHS = 30
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

# Evaluation
FIDELITY_SAMPLES = 10_000
PRECISION_BITS_CEILING = 52  # float64 mantissa
UNMATCHED_COSINE = 0.9  # Alignment pairs below this are reported unmatched
DEAD_ROW_NORM = 1e-12  # Rows below this norm are excluded from alignment
PGD_EPSILON = 0.1
PGD_ITERATIONS = 20

# Hardness
GRID_SHARD_SIZE = 1 << 16  # Points evaluated per enumeration shard
EQUIVALENCE_ATOL = 1e-9

# Services
WIRE_TIMEOUT = _env_float("RELX_WIRE_TIMEOUT", 30.0)  # Seconds
WIRE_MAX_LINE = _env_int("RELX_WIRE_MAX_LINE", 1 << 22)  # Bytes per request line
QUERY_WORKERS = _env_int("RELX_QUERY_WORKERS", 8)  # Threads for wire batch queries
