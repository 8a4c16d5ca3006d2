"""Exception hierarchy for relx."""

from typing import Any, Dict, Optional


class RelxError(Exception):
    """Base class for recoverable domain errors."""


class DimensionMismatchError(RelxError, ValueError):
    def __init__(self, what: str, expected: Any, actual: Any):
        self.what = what
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected {expected}, got {actual}")


class NonFiniteError(RelxError, ValueError):
    pass


class ModelFormatError(RelxError, ValueError):
    pass


class EquivalenceError(RelxError, ValueError):
    """An equivalence-class transform was asked for something outside the class."""


class OracleError(RelxError, RuntimeError):
    """Transport or protocol failure talking to a logit oracle."""


class BudgetExhaustedError(RelxError):
    def __init__(self, spent: int, budget: int):
        self.spent = spent
        self.budget = budget
        super().__init__(f"query budget exhausted ({spent}/{budget})")


class DeadNeuronError(RelxError):
    """All second differences at a critical point sit below the noise floor."""


class RankDeficientError(RelxError, ValueError):
    pass


class ExtractionError(RelxError):
    """A phase failed; whatever was recovered so far travels with the error."""

    def __init__(self, message: str, partial: Optional[Dict[str, Any]] = None):
        self.partial = partial or {}
        self.report: Optional[Any] = None  # filled in by the orchestrator
        super().__init__(message)


class TrainingError(RelxError):
    def __init__(self, message: str, iteration: int):
        self.iteration = iteration
        super().__init__(f"{message} (iteration {iteration})")


class RefinementError(RelxError):
    pass
