"""Threaded server for the newline oracle protocol."""

import logging
import socketserver
import threading
from typing import Tuple

from .. import config
from ..adapters.oracles.factory import parse_hostport
from ..core import wire
from ..core.errors import OracleError, RelxError
from ..core.models import TwoLayerNet
from ..core.network import forward_logits

logger = logging.getLogger(__name__)


class OracleRequestHandler(socketserver.StreamRequestHandler):
    """One client connection: answer `Q` lines until EOF.

    Malformed requests get an `E` line and the connection stays open; a line
    longer than the configured limit closes it.
    """

    def handle(self):
        peer = "%s:%s" % self.client_address[:2]
        logger.debug(f"Client connected from {peer}")
        net: TwoLayerNet = self.server.net
        while True:
            raw = self.rfile.readline(config.WIRE_MAX_LINE + 1)
            if not raw:
                break
            if len(raw) > config.WIRE_MAX_LINE:
                logger.warning(f"Dropping {peer}: request line over {config.WIRE_MAX_LINE} bytes")
                self._send(wire.format_error("request line too long"))
                break
            try:
                x = wire.parse_query(raw.decode("utf-8"))
                if x.shape[0] != net.d:
                    raise OracleError(f"expected {net.d} values, got {x.shape[0]}")
                reply = wire.format_answer(forward_logits(net, x))
            except (RelxError, UnicodeDecodeError) as e:
                logger.info(f"Bad request from {peer}: {e}")
                reply = wire.format_error(str(e))
            if not self._send(reply):
                break
        logger.debug(f"Client {peer} disconnected")

    def _send(self, line: str) -> bool:
        try:
            self.wfile.write(line.encode("utf-8"))
            self.wfile.flush()
            return True
        except OSError as e:
            logger.info(f"Write failed: {e}")
            return False


class OracleServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, net: TwoLayerNet, address: Tuple[str, int]):
        self.net = net
        super().__init__(address, OracleRequestHandler)


class RunningService:
    """A server answering on a background thread."""

    def __init__(self, server: OracleServer):
        self.server = server
        self._closed = False
        self._thread = threading.Thread(target=server.serve_forever, daemon=True)
        self._thread.start()

    @property
    def address(self) -> Tuple[str, int]:
        host, port = self.server.server_address[:2]
        return host, port

    @property
    def endpoint(self) -> str:
        host, port = self.address
        return f"tcp:{host}:{port}"

    def wait(self) -> None:
        """Block until interrupted, then stop serving."""
        try:
            while self._thread.is_alive():
                self._thread.join(timeout=0.5)
        except KeyboardInterrupt:
            logger.info("Interrupted; shutting down")
        finally:
            self.shutdown()

    def shutdown(self) -> None:
        if self._closed:
            return
        self._closed = True
        self.server.shutdown()
        self.server.server_close()
        self._thread.join()

    def __enter__(self) -> "RunningService":
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()


def serve(net: TwoLayerNet, endpoint: str = "127.0.0.1:0") -> RunningService:
    """Start answering queries for `net` on host:port (port 0 picks a free one)."""
    if endpoint.startswith("tcp:"):
        endpoint = endpoint[len("tcp:") :]
    host, port = parse_hostport(endpoint)
    try:
        server = OracleServer(net, (host, port))
    except OSError as e:
        raise OracleError(f"cannot bind {host}:{port}: {e}")
    service = RunningService(server)
    logger.info(f"Serving d={net.d} h={net.h} K={net.k} oracle on {service.endpoint}")
    return service
