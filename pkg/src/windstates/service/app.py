"""FastAPI service exposing the pipeline commands and the state model.

The batch commands are job-style endpoints: the request carries config
overrides, the server runs the pipeline step against the filesystem and
returns its summary. ``/state`` serves the trained boundary model directly
so clients can classify new epochs from their mean wind speed alone.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..config import build_config
from ..errors import DataError, UsageError
from ..pipeline import (
    BOUNDARIES_FILE,
    run_assign,
    run_boundaries,
    run_cluster,
    run_ingest,
    run_report,
    run_synth,
)
from ..states import STATE_OF_REGIME, StateBoundaries, assign_state
from ..version import __version__
from .schemas import (
    HealthResponse,
    RunRequest,
    RunResponse,
    StateAssignment,
    StateRequest,
    StateResponse,
)

log = logging.getLogger(__name__)

COMMANDS = {
    "synth": run_synth,
    "ingest": run_ingest,
    "cluster": run_cluster,
    "boundaries": run_boundaries,
    "assign": run_assign,
    "report": run_report,
}


def _load_boundaries(req: StateRequest) -> StateBoundaries:
    if req.boundaries is not None:
        doc = req.boundaries
    elif req.out:
        path = Path(req.out) / "artifacts" / BOUNDARIES_FILE
        if not path.is_file():
            raise DataError(f"no boundary model at {path}; run the boundaries command first")
        doc = json.loads(path.read_text())
    else:
        raise UsageError("provide either a boundaries document or an out directory")
    if "method" not in doc:
        raise UsageError("boundaries document is missing its 'method' field")
    return StateBoundaries.from_doc(doc)


def create_app() -> FastAPI:
    app = FastAPI(title="windstates", version=__version__)

    @app.exception_handler(UsageError)
    async def _usage(request: Request, exc: UsageError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(DataError)
    async def _data(request: Request, exc: DataError):
        return JSONResponse(status_code=409, content={"error": str(exc)})

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    def _make_endpoint(fn):
        def endpoint(req: RunRequest) -> RunResponse:
            cfg = build_config(req.config, req.overrides, seed=req.seed, out=req.out)
            return RunResponse(summary=fn(cfg))

        return endpoint

    for name, fn in COMMANDS.items():
        endpoint = _make_endpoint(fn)
        endpoint.__name__ = f"run_{name}"
        app.post(f"/{name}", response_model=RunResponse)(endpoint)

    @app.post("/state", response_model=StateResponse)
    def state(req: StateRequest) -> StateResponse:
        model = _load_boundaries(req)
        assignments = []
        for v in req.wind_speeds:
            regime = assign_state(v, model)
            assignments.append(
                StateAssignment(wind_speed=v, regime=regime, state=STATE_OF_REGIME[regime])
            )
        return StateResponse(method=model.method, assignments=assignments)

    return app
