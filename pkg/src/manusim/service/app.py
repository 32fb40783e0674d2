"""FastAPI application: REST endpoints plus the teleop WebSocket."""

import json
import logging
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles

from ..config import load_config, merge_config, validate_config
from ..errors import ManusimError, ValidationError
from ..retarget import MarkerFrame
from ..sessionlog import validate_log
from . import ops
from .bridge import TeleopBridge, client_loop
from .models import (
    MechReportRequest,
    MechReportResponse,
    MetricsRequest,
    MetricsResponse,
    ReplayRequest,
    ReplayResponse,
    RetargetRequest,
    RetargetResponse,
    SimulateRequest,
    SimulateResponse,
)

log = logging.getLogger(__name__)


def create_app(
    cfg: dict | None = None,
    record_path: str | Path | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    base_cfg = cfg or load_config()
    app = FastAPI(title="manusim", version="0.1.0")
    bridge = TeleopBridge(base_cfg, record_path=record_path)
    app.state.bridge = bridge

    @app.on_event("startup")
    async def _startup():
        bridge.start()

    @app.on_event("shutdown")
    async def _shutdown():
        await bridge.stop()

    def _merged(overrides: dict) -> dict:
        merged = merge_config(base_cfg, overrides) if overrides else base_cfg
        validate_config(merged)
        return merged

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok"}

    @app.get("/api/config")
    async def get_config():
        return base_cfg

    # the POST handlers are plain functions on purpose: FastAPI runs them in
    # its threadpool, so a long simulation cannot stall the live bridge loop
    @app.post("/api/mech-report", response_model=MechReportResponse)
    def post_mech_report(request: MechReportRequest):
        try:
            report, table = ops.do_mech_report(_merged(request.config))
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=exc.errors)
        return MechReportResponse(report=report, table=table)

    @app.post("/api/simulate", response_model=SimulateResponse)
    def post_simulate(request: SimulateRequest):
        try:
            cfg_run = _merged(request.config)
            script_lines = [
                json.dumps(line.model_dump(exclude_none=True)) for line in request.script
            ]
            records, summary = ops.do_simulate(
                cfg_run, script_lines=script_lines, seed=request.seed
            )
        except (ValidationError, ManusimError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return SimulateResponse(
            summary=summary, records=records if request.include_records else None
        )

    @app.post("/api/replay", response_model=ReplayResponse)
    def post_replay(request: ReplayRequest):
        try:
            report = ops.do_replay(request.records, seed_override=request.seed_override)
        except (ValidationError, ManusimError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return ReplayResponse(report=report.to_dict())

    @app.post("/api/retarget", response_model=RetargetResponse)
    def post_retarget(request: RetargetRequest):
        try:
            frames = [
                MarkerFrame(
                    float(obj["t"]),
                    {
                        str(k): np.asarray([float(v) for v in xyz])
                        for k, xyz in obj["markers"].items()
                    },
                )
                for obj in request.frames
            ]
            command_frames, intents = ops.do_retarget(_merged(request.config), frames)
        except (KeyError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=f"malformed marker frame: {exc}")
        except (ValidationError, ManusimError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return RetargetResponse(
            command_frames=command_frames, intents=[e.to_dict() for e in intents]
        )

    @app.post("/api/metrics", response_model=MetricsResponse)
    def post_metrics(request: MetricsRequest):
        try:
            for records in request.sessions:
                errors = validate_log(records)
                if errors:
                    raise ValidationError(errors)
            summary = ops.do_metrics(request.sessions)
        except (ValidationError, ManusimError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return MetricsResponse(summary=summary)

    @app.websocket("/ws")
    async def ws_endpoint(websocket: WebSocket):
        await websocket.accept()
        try:
            await client_loop(websocket, bridge)
        except WebSocketDisconnect:
            bridge.unregister(websocket)

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
