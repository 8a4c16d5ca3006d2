import logging
from typing import Optional

from ...core.errors import OracleError
from ...core.models import Phase, QueryLedger
from ...core.oracle import OracleHandle
from ...core.serialization import load_model
from .base import LogitBackend
from .http import HttpBackend
from .local import LocalBackend
from .tcp import TcpBackend

logger = logging.getLogger(__name__)


def parse_hostport(endpoint: str) -> tuple[str, int]:
    host, sep, port = endpoint.rpartition(":")
    if not sep or not host or not port.isdigit():
        raise OracleError(f"expected <host:port>, got {endpoint!r}")
    return host, int(port)


class OracleFactory:
    """Builds oracle backends from spec strings.

    ``local:<model-file>``, ``tcp:<host:port>`` or ``http://<host:port>``.
    """

    def backend(self, spec: str) -> LogitBackend:
        if spec.startswith("local:"):
            path = spec[len("local:") :]
            logger.info(f"Loading local oracle from {path}")
            return LocalBackend(load_model(path))
        if spec.startswith("tcp:"):
            host, port = parse_hostport(spec[len("tcp:") :])
            return TcpBackend(host, port)
        if spec.startswith(("http://", "https://")):
            return HttpBackend(spec)
        raise OracleError(f"unknown oracle spec {spec!r}")

    def local(self, net, ledger: Optional[QueryLedger] = None) -> OracleHandle:
        return OracleHandle(LocalBackend(net), ledger=ledger)

    def connect(
        self,
        spec: str,
        ledger: Optional[QueryLedger] = None,
        phase: Phase = Phase.OTHER,
        d: Optional[int] = None,
    ) -> OracleHandle:
        return OracleHandle(self.backend(spec), ledger=ledger, phase=phase, d=d)


def connect(
    endpoint: str, ledger: Optional[QueryLedger] = None, d: Optional[int] = None
) -> OracleHandle:
    """Handle onto a served oracle; a bare ``host:port`` means the newline protocol."""
    if "://" not in endpoint and not endpoint.startswith(("tcp:", "local:")):
        endpoint = f"tcp:{endpoint}"
    return OracleFactory().connect(endpoint, ledger=ledger, d=d)
