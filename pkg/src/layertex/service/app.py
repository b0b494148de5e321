"""FastAPI application exposing pipeline jobs, stats, and artifacts."""

from __future__ import annotations

import json
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse

from .. import __version__
from ..pipeline import EXIT_VALIDATION
from .jobs import JobStore, collect_stats
from .models import HealthResponse, JobRequest, JobStatus, StatsResponse


def create_app() -> FastAPI:
    app = FastAPI(title="layertex", version=__version__)
    store = JobStore()

    @app.get("/healthz", response_model=HealthResponse)
    def healthz() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/jobs", response_model=JobStatus)
    def submit_job(request: JobRequest) -> JobStatus:
        if not Path(request.mesh).exists():
            raise HTTPException(status_code=400, detail=f"mesh file not found: {request.mesh}")
        return store.submit(request)

    @app.get("/jobs", response_model=list[JobStatus])
    def list_jobs() -> list[JobStatus]:
        return store.all()

    @app.get("/jobs/{job_id}", response_model=JobStatus)
    def get_job(job_id: str) -> JobStatus:
        status = store.get(job_id)
        if status is None:
            raise HTTPException(status_code=404, detail=f"no such job: {job_id}")
        return status

    @app.get("/jobs/{job_id}/report")
    def get_job_report(job_id: str) -> dict:
        status = store.get(job_id)
        if status is None:
            raise HTTPException(status_code=404, detail=f"no such job: {job_id}")
        report_path = Path(status.workdir) / "report.json"
        if not report_path.exists():
            raise HTTPException(status_code=404, detail="report not written yet")
        return json.loads(report_path.read_text())

    @app.get("/stats", response_model=StatsResponse)
    def stats(workdir: str) -> StatsResponse:
        if not Path(workdir).exists():
            raise HTTPException(status_code=404, detail=f"no such workdir: {workdir}")
        return collect_stats(workdir)

    @app.get("/artifacts/final")
    def final_texture(workdir: str) -> FileResponse:
        path = Path(workdir) / "final.png"
        if not path.exists():
            raise HTTPException(status_code=404, detail="final.png not produced yet")
        return FileResponse(path, media_type="image/png")

    # FastAPI turns pydantic validation errors into 422; semantic config errors
    # surface as 400 through run_pipeline's validation exit path.
    app.state.exit_validation = EXIT_VALIDATION
    return app
