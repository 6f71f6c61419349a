"""HTTP facade over the generation/training/evaluation pipeline.

Jobs run synchronously in the request (they are minutes-scale at most and
the primary client is the bundled CLI talking in-process). Error mapping:
bad input -> 400, missing or corrupt artifacts -> 404, anything else -> 500;
each error body carries a ``kind`` the CLI turns into its exit code.
"""

from __future__ import annotations

import dataclasses

from fastapi import FastAPI, HTTPException, Query

from .. import __version__
from ..pipeline import (DataError, EvalCell, UsageError, render_markdown,
                        run_ablation, run_eval, run_generate, run_stats,
                        run_train)
from ..randomize import RandomizationConfig, load_randomization_config
from .schemas import (AblationRequest, Cell, EvalRequest, EvalResponse,
                      GenerateRequest, GenerateResponse, HealthResponse,
                      StatsResponse, TrainRequest, TrainResponse)


def _error(kind: str, status: int, message: str) -> HTTPException:
    return HTTPException(status_code=status,
                         detail={"kind": kind, "message": message})


def _load_config(path) -> RandomizationConfig | None:
    if path is None:
        return None
    try:
        return load_randomization_config(path)
    except FileNotFoundError:
        raise _error("data", 404, f"config file not found: {path}")
    except (ValueError, TypeError) as exc:
        raise _error("usage", 400, f"bad randomization config: {exc}")


def _cell(c: EvalCell) -> Cell:
    return Cell(task=c.task, train_factors=c.train_factors,
                eval_factor=c.eval_factor, rollouts=c.rollouts,
                successes=c.successes, rate=c.rate, diagonal=c.diagonal,
                note=c.note)


def create_app() -> FastAPI:
    app = FastAPI(title="scenegen", version=__version__)

    def guarded(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except UsageError as exc:
            raise _error("usage", 400, str(exc))
        except DataError as exc:
            raise _error("data", 404, str(exc))

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/generate", response_model=GenerateResponse)
    def generate(req: GenerateRequest) -> GenerateResponse:
        report = guarded(run_generate, req.task, req.factors, req.episodes,
                         req.seed, req.out, config=_load_config(req.config),
                         workers=req.workers)
        return GenerateResponse(**dataclasses.asdict(report))

    @app.post("/train", response_model=TrainResponse)
    def train(req: TrainRequest) -> TrainResponse:
        report = guarded(run_train, req.dataset, req.out, seed=req.seed,
                         epochs=req.epochs)
        return TrainResponse(**dataclasses.asdict(report))

    @app.post("/eval", response_model=EvalResponse)
    def evaluate(req: EvalRequest) -> EvalResponse:
        report = guarded(run_eval, req.checkpoint, req.factors,
                         rollouts=req.rollouts, seed=req.seed,
                         task_id=req.task, out=req.out,
                         config=_load_config(req.config),
                         max_steps=req.max_steps)
        return EvalResponse(cells=[_cell(c) for c in report.cells],
                            csv_path=report.csv_path, skipped=report.skipped,
                            markdown=render_markdown(report.cells))

    @app.post("/ablation", response_model=EvalResponse)
    def ablation(req: AblationRequest) -> EvalResponse:
        report = guarded(run_ablation, req.checkpoints, req.eval_factors,
                         rollouts=req.rollouts, seed=req.seed, out=req.out,
                         task_id=req.task, config=_load_config(req.config),
                         max_steps=req.max_steps)
        return EvalResponse(cells=[_cell(c) for c in report.cells],
                            csv_path=report.csv_path, skipped=report.skipped,
                            markdown=render_markdown(report.cells))

    @app.get("/stats", response_model=StatsResponse)
    def stats(path: str = Query(..., description="dataset directory")
              ) -> StatsResponse:
        return StatsResponse(**guarded(run_stats, path))

    return app


app = create_app()
