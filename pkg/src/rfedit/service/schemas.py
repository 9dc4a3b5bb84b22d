"""Request/response models for the experiment service."""

from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, Field


class ExperimentRequest(BaseModel):
    """A run request: the flat config text plus optional overrides."""

    config_text: str
    seed: int | None = Field(default=None, ge=0)
    svg: bool = False


class SweepRequest(ExperimentRequest):
    param: Literal["w", "alpha", "hook_scale", "n_steps"]
    values: list[float] = Field(min_length=2)


class AssertionModel(BaseModel):
    name: str
    passed: bool
    detail: str


class ExperimentResponse(BaseModel):
    status: Literal["ok"] = "ok"
    experiment: str
    passed: bool
    rows: list[dict[str, Any]]
    assertions: list[AssertionModel]
    artifacts: dict[str, str]


class ErrorResponse(BaseModel):
    error: str
    message: str
