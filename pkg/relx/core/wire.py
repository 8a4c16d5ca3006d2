"""Newline-delimited oracle protocol.

Request ``Q <d hex floats>``; response ``A <K hex floats>`` or ``E <message>``.
"""

from typing import List

import numpy as np

from .errors import ModelFormatError, OracleError
from .serialization import decode_values, encode_values


def format_query(x: np.ndarray) -> str:
    return f"Q {encode_values(x)}\n"


def format_answer(logits: np.ndarray) -> str:
    return f"A {encode_values(logits)}\n"


def format_error(message: str) -> str:
    return "E " + " ".join(message.split()) + "\n"


def parse_query(line: str) -> np.ndarray:
    """Decode a request line; raises ModelFormatError/NonFiniteError on bad input."""
    tag, _, payload = line.strip().partition(" ")
    if tag != "Q":
        raise ModelFormatError(f"unknown request tag {tag!r}")
    values = decode_values(payload)
    if not values:
        raise ModelFormatError("empty query")
    return np.array(values, dtype=np.float64)


def parse_answer(line: str) -> np.ndarray:
    if not line:
        raise OracleError("connection closed by oracle")
    tag, _, payload = line.strip().partition(" ")
    if tag == "E":
        raise OracleError(f"oracle error: {payload}")
    if tag != "A":
        raise OracleError(f"malformed response: {line.strip()[:80]!r}")
    try:
        values: List[float] = decode_values(payload)
    except ValueError as e:
        raise OracleError(f"malformed response: {e}")
    return np.array(values, dtype=np.float64)
