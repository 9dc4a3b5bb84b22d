"""FastAPI application exposing the experiment harness.

Endpoints mirror the CLI subcommands one-to-one; responses carry the run
rows, assertion outcomes, and the deterministic artifacts (runs.csv,
runs.json, traj_*.svg, plus a non-deterministic timings.csv) as strings so
any client can persist byte-identical files.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..errors import ConfigurationError, DomainError, NumericalError
from ..harness.config import parse_config
from ..harness.io import row_to_dict, rows_to_csv, rows_to_json, timings_csv
from ..harness.runner import (ExperimentResult, run_compare, run_edit, run_plot,
                              run_reconstruct, run_sweep)
from .schemas import AssertionModel, ExperimentRequest, ExperimentResponse, SweepRequest


def _config_from(req: ExperimentRequest):
    try:
        cfg = parse_config(req.config_text)
        if req.seed is not None:
            cfg = cfg.replace(seed=req.seed)
        cfg.require_seed()
        return cfg
    except ConfigurationError as exc:
        raise HTTPException(status_code=400,
                            detail={"error": "configuration", "message": str(exc)}) from exc


def _respond(result: ExperimentResult) -> ExperimentResponse:
    artifacts = dict(result.svgs)
    if result.rows:
        artifacts["runs.csv"] = rows_to_csv(result.rows)
        artifacts["runs.json"] = rows_to_json(result.rows, result.assertions)
        artifacts["timings.csv"] = timings_csv(result.rows)
    return ExperimentResponse(
        experiment=result.experiment,
        passed=result.passed,
        rows=[row_to_dict(r) for r in result.rows],
        assertions=[AssertionModel(name=a.name, passed=a.passed, detail=a.detail)
                    for a in result.assertions],
        artifacts=artifacts,
    )


def _run(fn, req: ExperimentRequest, **kw) -> ExperimentResponse:
    cfg = _config_from(req)
    try:
        return _respond(fn(cfg, **kw))
    except (ConfigurationError, DomainError) as exc:
        raise HTTPException(status_code=400,
                            detail={"error": "configuration", "message": str(exc)}) from exc
    except NumericalError as exc:
        raise HTTPException(status_code=500,
                            detail={"error": "numerical", "message": str(exc)}) from exc


def create_app() -> FastAPI:
    app = FastAPI(title="rfedit service", version=__version__)

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/run/reconstruct", response_model=ExperimentResponse)
    def reconstruct(req: ExperimentRequest):
        return _run(run_reconstruct, req)

    @app.post("/run/edit", response_model=ExperimentResponse)
    def edit(req: ExperimentRequest):
        return _run(lambda cfg: run_edit(cfg, include_svg=req.svg), req)

    @app.post("/run/compare", response_model=ExperimentResponse)
    def compare(req: ExperimentRequest):
        return _run(run_compare, req)

    @app.post("/run/sweep", response_model=ExperimentResponse)
    def sweep(req: SweepRequest):
        return _run(lambda cfg: run_sweep(cfg, req.param, list(req.values)), req)

    @app.post("/run/plot", response_model=ExperimentResponse)
    def plot(req: ExperimentRequest):
        return _run(run_plot, req)

    return app


app = create_app()
