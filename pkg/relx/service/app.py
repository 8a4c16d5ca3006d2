import logging
import os
from datetime import datetime
from typing import Dict, List

from dotenv import load_dotenv
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .. import __version__, config
from ..core.errors import RelxError
from ..core.models import TwoLayerNet
from ..core.network import forward_logits
from ..core.serialization import decode_values, encode_values, load_model

logger = logging.getLogger(__name__)


class QueryRequest(BaseModel):
    """Input point as hex-float64 strings."""

    x: List[str]


class QueryResponse(BaseModel):
    logits: List[str]


class HealthResponse(BaseModel):
    status: str
    timestamp: datetime
    model: Dict[str, int]


def create_app(net: TwoLayerNet) -> FastAPI:
    """HTTP transport of the logit oracle for `net`."""
    app = FastAPI(
        title="relx oracle",
        description="Logit oracle for a two-layer ReLU network",
        version=__version__,
    )

    @app.post("/query", response_model=QueryResponse)
    def query(request: QueryRequest):
        try:
            x = decode_values(" ".join(request.x))
        except RelxError as e:
            logger.info(f"Rejected query: {e}")
            raise HTTPException(status_code=400, detail=str(e))
        if len(x) != net.d:
            raise HTTPException(
                status_code=400, detail=f"expected {net.d} values, got {len(x)}"
            )
        try:
            logits = forward_logits(net, x)
        except Exception as e:
            logger.error(f"Error evaluating query: {str(e)}")
            raise HTTPException(status_code=500, detail=str(e))
        return QueryResponse(logits=encode_values(logits).split())

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(
            status="ok",
            timestamp=datetime.now(),
            model={"d": net.d, "h": net.h, "k": net.k},
        )

    return app


def create_app_from_env() -> FastAPI:
    """App factory for `uvicorn --factory`, serving RELX_SERVICE_MODEL."""
    load_dotenv()
    logging.basicConfig(level=os.getenv("RELX_LOG_LEVEL", config.LOG_LEVEL))
    path = os.getenv("RELX_SERVICE_MODEL")
    if not path:
        raise ValueError("RELX_SERVICE_MODEL not found in environment variables")
    logger.info(f"Serving model {path}")
    return create_app(load_model(path))
