"""Bit-exact text format for TwoLayerNet.

Line 1 is the header ``relu2 v1 d=<d> h=<h> k=<K>``; then h lines of d values
(a0 rows), one line of h values (b0), K lines of h values (a1 rows) and one
line of K values (b1). Values are hex-float64 (``float.hex``).
"""

import math
import re
from pathlib import Path
from typing import Iterable, List

import numpy as np

from .errors import ModelFormatError, NonFiniteError
from .models import TwoLayerNet

HEADER = re.compile(r"^relu2 v1 d=(\d+) h=(\d+) k=(\d+)$")


def encode_values(values: Iterable[float]) -> str:
    return " ".join(float(v).hex() for v in values)


def decode_values(text: str) -> List[float]:
    """Parse space-separated hex floats, rejecting NaN and infinities."""
    values = []
    for token in text.split():
        try:
            value = float.fromhex(token)
        except ValueError:
            raise ModelFormatError(f"not a hex float: {token!r}")
        if not math.isfinite(value):
            raise NonFiniteError(f"non-finite value {token!r}")
        values.append(value)
    return values


def serialize(net: TwoLayerNet) -> str:
    lines = [f"relu2 v1 d={net.d} h={net.h} k={net.k}"]
    lines.extend(encode_values(row) for row in net.a0)
    lines.append(encode_values(net.b0))
    lines.extend(encode_values(row) for row in net.a1)
    lines.append(encode_values(net.b1))
    return "\n".join(lines) + "\n"


def deserialize(blob: str) -> TwoLayerNet:
    lines = blob.splitlines()
    if not lines:
        raise ModelFormatError("empty model blob")
    match = HEADER.match(lines[0].strip())
    if not match:
        raise ModelFormatError(f"bad header: {lines[0]!r}")
    d, h, k = (int(g) for g in match.groups())
    if min(d, h, k) <= 0:
        raise ModelFormatError(f"dimensions must be positive: d={d} h={h} k={k}")

    body = lines[1:]
    while body and not body[-1].strip():
        body.pop()
    expected_lines = h + 1 + k + 1
    if len(body) != expected_lines:
        raise ModelFormatError(
            f"shape error: header d={d} h={h} k={k} needs {expected_lines} value lines, "
            f"found {len(body)}"
        )

    def take(rows: List[str], width: int, what: str) -> np.ndarray:
        out = []
        for n, line in enumerate(rows):
            values = decode_values(line)
            if len(values) != width:
                raise ModelFormatError(
                    f"shape error: {what} line {n} has {len(values)} values, expected {width}"
                )
            out.append(values)
        return np.array(out, dtype=np.float64)

    a0 = take(body[:h], d, "a0")
    b0 = take(body[h : h + 1], h, "b0")[0]
    a1 = take(body[h + 1 : h + 1 + k], h, "a1")
    b1 = take(body[h + 1 + k :], k, "b1")[0]
    return TwoLayerNet(a0=a0, b0=b0, a1=a1, b1=b1)


def save_model(net: TwoLayerNet, path: str | Path) -> None:
    Path(path).write_text(serialize(net), encoding="utf-8")


def load_model(path: str | Path) -> TwoLayerNet:
    return deserialize(Path(path).read_text(encoding="utf-8"))
