"""FastAPI service exposing /v1/nli and /healthz.

Raw logits on the wire, never softmaxed: downstream consumers subtract
logits directly and only softmax where a probability is required.
"""

from __future__ import annotations

import logging
import threading

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .config import SidecarConfig
from .scorers import Scorer, build_scorer

logger = logging.getLogger(__name__)


class PairIn(BaseModel):
    text_a: str = Field(min_length=1)
    text_b: str = Field(min_length=1)


class NliRequest(BaseModel):
    pairs: list[PairIn] = Field(min_length=1)


class VerdictOut(BaseModel):
    entailment: float
    neutral: float
    contradiction: float


class NliResponse(BaseModel):
    model_version: str
    verdicts: list[VerdictOut]


def create_app(config: SidecarConfig, scorer: Scorer | None = None, lazy: bool = False) -> FastAPI:
    """Build the service; with lazy=True the model loads on first use and
    /healthz reports 503 until it is ready."""
    app = FastAPI(title="nli-sidecar")
    state = {"scorer": scorer}
    load_lock = threading.Lock()

    def get_scorer() -> Scorer | None:
        if state["scorer"] is None and not lazy:
            with load_lock:
                if state["scorer"] is None:
                    state["scorer"] = build_scorer(
                        config.model_identifier,
                        device=config.device,
                        max_batch=config.max_batch,
                    )
        return state["scorer"]

    def ensure_loaded() -> None:
        if state["scorer"] is None:
            with load_lock:
                if state["scorer"] is None:
                    state["scorer"] = build_scorer(
                        config.model_identifier,
                        device=config.device,
                        max_batch=config.max_batch,
                    )

    app.state.ensure_loaded = ensure_loaded

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.get("/healthz")
    def healthz():
        current = get_scorer()
        if current is None:
            return JSONResponse(status_code=503, content={"detail": "model not ready"})
        return {"status": "ok", "model_version": current.model_version}

    @app.post("/v1/nli")
    def score(request: NliRequest):
        current = get_scorer()
        if current is None:
            return JSONResponse(status_code=503, content={"detail": "model not ready"})
        if len(request.pairs) > config.max_batch:
            return JSONResponse(
                status_code=413,
                content={"detail": f"batch of {len(request.pairs)} exceeds max {config.max_batch}"},
            )
        logits = current.score([(p.text_a, p.text_b) for p in request.pairs])
        return NliResponse(
            model_version=current.model_version,
            verdicts=[
                VerdictOut(entailment=e, neutral=n, contradiction=c) for e, n, c in logits
            ],
        )

    return app


def run() -> None:
    import uvicorn

    logging.basicConfig(level=logging.INFO)
    config = SidecarConfig.from_env()
    app = create_app(config)
    app.state.ensure_loaded()
    uvicorn.run(app, host="0.0.0.0", port=config.port)
