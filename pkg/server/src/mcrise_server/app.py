"""FastAPI application exposing the scoring wire protocol.

GET  /v1/health -> {"status": "ok", "labels": [...]}
POST /v1/score  -> {"id": ..., "scores": [[...], ...]}

Error bodies are JSON: 400 malformed request, 422 unknown label, 500
backend failure.  Requests are parsed and scored off the event loop; the
backend itself guards any non-thread-safe state.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response
from starlette.concurrency import run_in_threadpool

from .backends import BackendError, UnknownLabelError
from .protocol import ProtocolError, encode_score_response, parse_score_request


def make_app(backend, batch_cap: int = 256) -> FastAPI:
    app = FastAPI(title="mcrise scoring server", docs_url=None, redoc_url=None)
    app.state.backend = backend
    app.state.batch_cap = batch_cap

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "labels": backend.labels()}

    def handle_score(body: bytes) -> bytes:
        request_id, images, labels = parse_score_request(body, batch_cap)
        scores = np.asarray(backend.score(images, labels), dtype=np.float64)
        if scores.shape != (images.shape[0], len(labels)):
            raise BackendError(f"backend produced shape {scores.shape}")
        if not np.isfinite(scores).all() or scores.min() < 0 or scores.max() > 1:
            raise BackendError("backend produced scores outside [0, 1]")
        return encode_score_response(request_id, scores)

    @app.post("/v1/score")
    async def score(request: Request):
        body = await request.body()
        try:
            payload = await run_in_threadpool(handle_score, body)
        except ProtocolError as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        except UnknownLabelError as exc:
            # KeyError str() wraps the message in repr quotes
            message = exc.args[0] if exc.args else str(exc)
            return JSONResponse({"error": str(message)}, status_code=422)
        except Exception as exc:
            return JSONResponse({"error": f"backend failure: {exc}"}, status_code=500)
        return Response(content=payload, media_type="application/json")

    return app
