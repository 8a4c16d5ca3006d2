import logging

import httpx
import numpy as np

from ...config import WIRE_TIMEOUT
from ...core.errors import OracleError
from ...core.serialization import decode_values
from .base import LogitBackend

logger = logging.getLogger(__name__)


class HttpBackend(LogitBackend):
    """Client for the FastAPI oracle service (POST /query)."""

    concurrent = True

    def __init__(self, base_url: str, timeout: float = WIRE_TIMEOUT, client=None):
        self.base_url = base_url.rstrip("/")
        self._client = client or httpx.Client(base_url=self.base_url, timeout=timeout)

    def logits(self, x: np.ndarray) -> np.ndarray:
        payload = {"x": [float(v).hex() for v in x]}
        try:
            response = self._client.post("/query", json=payload)
        except httpx.HTTPError as e:
            raise OracleError(f"oracle request failed: {e}")
        if response.status_code != 200:
            try:
                detail = response.json().get("detail")
            except ValueError:
                detail = response.text
            raise OracleError(f"oracle error {response.status_code}: {detail}")
        try:
            return np.array(decode_values(" ".join(response.json()["logits"])))
        except (KeyError, TypeError, ValueError) as e:
            raise OracleError(f"malformed response: {e}")

    def close(self) -> None:
        self._client.close()
