"""HTTP service wrapping the coordinator state machine.

Every request and response body is validated against the wire-protocol
models, so nothing outside the telemetry whitelist can leave the process.
"""

from __future__ import annotations

import contextlib
import logging
import os
from pathlib import Path

from fastapi import FastAPI, Header, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .. import protocol
from .state import ApiError, Coordinator, RoundDriver

log = logging.getLogger("fedtab.coordinator")


def _bearer(authorization: str | None) -> str | None:
    if authorization and authorization.startswith("Bearer "):
        return authorization[len("Bearer "):]
    return None


def create_app(coordinator: Coordinator, run_driver: bool = True) -> FastAPI:
    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        driver = RoundDriver(coordinator) if run_driver else None
        if driver:
            driver.start()
        try:
            yield
        finally:
            if driver:
                driver.stop()
                driver.join(timeout=5.0)
            coordinator.close()

    app = FastAPI(title="fedtab coordinator", lifespan=lifespan)
    app.state.coordinator = coordinator

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"detail": exc.detail})

    @app.post("/v1/register", response_model=protocol.RegisterResponse)
    def register(body: protocol.RegisterRequest):
        return coordinator.register(
            body.client_id,
            body.declared_n_samples,
            body.cohort_stats.model_dump(),
        )

    @app.get("/v1/model", response_model=protocol.ModelResponse)
    def get_model(authorization: str | None = Header(default=None)):
        return coordinator.get_model(_bearer(authorization))

    @app.post("/v1/update", response_model=protocol.UpdateResponse)
    def submit_update(
        body: protocol.UpdateRequest,
        authorization: str | None = Header(default=None),
    ):
        return coordinator.submit_update(_bearer(authorization), body)

    @app.post("/v1/control", response_model=protocol.ControlResponse)
    def control(body: protocol.ControlRequest):
        return coordinator.control(body.action)

    @app.get("/v1/metrics", response_model=protocol.MetricsResponse)
    def metrics_current():
        return coordinator.metrics_current()

    @app.get("/v1/metrics/history", response_model=protocol.HistoryResponse)
    def metrics_history():
        return coordinator.metrics_history()

    @app.get("/v1/healthz", response_model=protocol.HealthResponse)
    def health():
        return coordinator.health()

    ui_dir = coordinator.config.ui_dir or _default_ui_dir()
    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def _default_ui_dir() -> str | None:
    # Serve the dashboard build when it exists next to the repository root.
    here = Path(__file__).resolve()
    for parent in here.parents:
        candidate = parent / "frontend" / "dist"
        if candidate.is_dir():
            return str(candidate)
    return None


def configure_logging() -> None:
    level = os.environ.get("FEDTAB_LOG", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
