"""Request/response models shared by the HTTP service and the CLI client."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field

from ..pipeline import PipelineConfig

JobStages = Literal["all", "decompose", "render", "blend"]
JobState = Literal["queued", "running", "done", "failed"]


class JobRequest(BaseModel):
    mesh: str
    workdir: str
    stages: JobStages = "all"
    config: PipelineConfig = Field(default_factory=PipelineConfig)


class JobStatus(BaseModel):
    id: str
    state: JobState
    stages: JobStages
    mesh: str
    workdir: str
    exit_code: int | None = None
    error: str | None = None
    report: dict | None = None


class StatsLevelRow(BaseModel):
    level: int
    superfaces: int
    init_faces: int
    residual_faces: int
    masked_texels: int | None = None


class StatsResponse(BaseModel):
    workdir: str
    faces: int | None = None
    superfaces: int | None = None
    levels: list[StatsLevelRow] = Field(default_factory=list)
    coverage: float | None = None
    face_level_disagreements: int | None = None


class HealthResponse(BaseModel):
    status: str
    version: str
