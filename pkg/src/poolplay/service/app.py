"""HTTP front end: pydantic request models over the operations in ``ops``."""

from __future__ import annotations

import logging
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from ..checkpoint import CheckpointFormatError
from ..league import RunError
from ..league.config import ConfigError
from ..modelpools import ManifestError, PoolError
from . import ops

log = logging.getLogger(__name__)


class TrainRequest(BaseModel):
    run_dir: str
    config: Optional[str] = None
    resume: bool = False
    steps: Optional[int] = Field(None, ge=0)
    seconds: Optional[float] = Field(None, ge=0)
    main_iterations: Optional[int] = Field(None, ge=0)


class EvalRequest(BaseModel):
    run_dir: str
    pool: str
    games: int = Field(6, ge=1)
    seed: int = 0
    limit: int = Field(10, ge=0)
    include_scripted: bool = True


class PlayRequest(BaseModel):
    a: str
    b: str
    seed: int = 0
    replay: Optional[str] = None


class ReportRequest(BaseModel):
    run_dir: str
    seed: int = 0


class AblateRequest(BaseModel):
    config: str
    arms: list[str] = Field(min_length=1)
    root: str
    main_iterations: int = Field(ge=1)
    games_per_pair: int = Field(6, ge=1)
    repeats: int = Field(1, ge=1)
    seed: int = 0


class GcRequest(BaseModel):
    run_dir: str


USER_ERRORS = (ops.OperationError, ConfigError, RunError, ManifestError, PoolError, CheckpointFormatError,
               FileNotFoundError)


def create_app() -> FastAPI:
    app = FastAPI(title="poolplay", version="1.0")

    async def user_error(request: Request, exc: Exception):
        log.info("%s rejected: %s", request.url.path, exc)
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    for cls in USER_ERRORS:
        app.add_exception_handler(cls, user_error)

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.post("/train")
    def train(req: TrainRequest) -> dict:
        return ops.train(req.run_dir, req.config, req.resume, req.steps, req.seconds, req.main_iterations)

    @app.post("/eval")
    def evaluate(req: EvalRequest) -> dict:
        return ops.evaluate(req.run_dir, req.pool, req.games, req.seed, req.limit, req.include_scripted)

    @app.post("/play")
    def play(req: PlayRequest) -> dict:
        return ops.play(req.a, req.b, req.seed, req.replay)

    @app.post("/report")
    def report(req: ReportRequest) -> dict:
        return ops.report(req.run_dir, req.seed)

    @app.post("/ablate")
    def ablate(req: AblateRequest) -> dict:
        return ops.ablate(req.config, req.arms, req.root, req.main_iterations, req.games_per_pair, req.repeats,
                          req.seed)

    @app.post("/gc")
    def gc(req: GcRequest) -> dict:
        return ops.gc(req.run_dir)

    return app


app = create_app()
