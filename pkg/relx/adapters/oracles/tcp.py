import logging
import socket
import threading

import numpy as np

from ...config import WIRE_TIMEOUT
from ...core import wire
from ...core.errors import OracleError
from .base import LogitBackend

logger = logging.getLogger(__name__)


class TcpBackend(LogitBackend):
    """Client for the newline protocol served by `relx serve-oracle`.

    One connection per backend; concurrent callers are serialized on it.
    """

    def __init__(self, host: str, port: int, timeout: float = WIRE_TIMEOUT):
        self.host = host
        self.port = port
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as e:
            raise OracleError(f"cannot connect to {host}:{port}: {e}")
        self._reader = self._sock.makefile("r", encoding="utf-8", newline="\n")
        self._lock = threading.Lock()
        logger.info(f"Connected to oracle at {host}:{port}")

    def logits(self, x: np.ndarray) -> np.ndarray:
        request = wire.format_query(x).encode("utf-8")
        with self._lock:
            try:
                self._sock.sendall(request)
                line = self._reader.readline()
            except OSError as e:
                raise OracleError(f"oracle connection failed: {e}")
        return wire.parse_answer(line)

    def close(self) -> None:
        try:
            self._reader.close()
            self._sock.close()
        except OSError:
            pass
