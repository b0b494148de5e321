"""Job execution: the one place pipeline runs are orchestrated.

The HTTP endpoints and the CLI's in-process mode both route through
execute_job / JobStore, so behavior cannot drift between transports.
"""

from __future__ import annotations

import json
import threading
import uuid
from pathlib import Path

from ..pipeline import run_pipeline
from .models import JobRequest, JobStatus, StatsLevelRow, StatsResponse


def execute_job(request: JobRequest) -> JobStatus:
    """Run a pipeline job synchronously and return its final status."""
    job_id = uuid.uuid4().hex[:12]
    exit_code, report = run_pipeline(
        request.config, request.mesh, request.workdir, stages=request.stages
    )
    return JobStatus(
        id=job_id,
        state="done" if exit_code == 0 else "failed",
        stages=request.stages,
        mesh=request.mesh,
        workdir=request.workdir,
        exit_code=exit_code,
        error=report.get("error"),
        report=report,
    )


class JobStore:
    """In-memory registry of jobs executed on background threads."""

    def __init__(self):
        self._lock = threading.Lock()
        self._jobs: dict[str, JobStatus] = {}

    def submit(self, request: JobRequest) -> JobStatus:
        job_id = uuid.uuid4().hex[:12]
        status = JobStatus(
            id=job_id,
            state="queued",
            stages=request.stages,
            mesh=request.mesh,
            workdir=request.workdir,
        )
        with self._lock:
            self._jobs[job_id] = status

        def work():
            with self._lock:
                self._jobs[job_id] = self._jobs[job_id].model_copy(update={"state": "running"})
            exit_code, report = run_pipeline(
                request.config, request.mesh, request.workdir, stages=request.stages
            )
            with self._lock:
                self._jobs[job_id] = self._jobs[job_id].model_copy(
                    update={
                        "state": "done" if exit_code == 0 else "failed",
                        "exit_code": exit_code,
                        "error": report.get("error"),
                        "report": report,
                    }
                )

        threading.Thread(target=work, name=f"layertex-job-{job_id}", daemon=True).start()
        return status

    def get(self, job_id: str) -> JobStatus | None:
        with self._lock:
            return self._jobs.get(job_id)

    def all(self) -> list[JobStatus]:
        with self._lock:
            return list(self._jobs.values())


def collect_stats(workdir: str | Path) -> StatsResponse:
    """Aggregate per-level decomposition and coverage tables from artifacts."""
    workdir = Path(workdir)
    stats = StatsResponse(workdir=str(workdir))

    sf_path = workdir / "superfaces.json"
    if sf_path.exists():
        payload = json.loads(sf_path.read_text())
        stats.superfaces = int(payload["count"])
        stats.faces = len(payload["assignment"])

    hit_path = workdir / "hitlevels.json"
    level_of_superface: dict[int, int] = {}
    if hit_path.exists():
        payload = json.loads(hit_path.read_text())
        stats.face_level_disagreements = payload.get("face_level_disagreements")
        for row in payload["superfaces"]:
            level_of_superface[row["id"]] = row["level"]

    report_path = workdir / "report.json"
    masked: dict[int, int] = {}
    if report_path.exists():
        report = json.loads(report_path.read_text())
        stats.coverage = report.get("coverage")
        unproject = report.get("stages", {}).get("unproject", {})
        for lvl, entry in unproject.get("levels", {}).items():
            masked[int(lvl)] = entry.get("masked_texels")

    ls_path = workdir / "levelsets.json"
    if ls_path.exists():
        payload = json.loads(ls_path.read_text())
        sf_per_level: dict[int, int] = {}
        for sf_id, lvl in level_of_superface.items():
            sf_per_level[lvl] = sf_per_level.get(lvl, 0) + 1
        for entry in payload["levels"]:
            lvl = int(entry["level"])
            stats.levels.append(
                StatsLevelRow(
                    level=lvl,
                    superfaces=sf_per_level.get(lvl, 0),
                    init_faces=len(entry["init_faces"]),
                    residual_faces=len(entry["residual_faces"]),
                    masked_texels=masked.get(lvl),
                )
            )
    return stats
