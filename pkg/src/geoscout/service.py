"""Stateless batch-reward HTTP endpoint for external RL trainers.

Ground truth travels inside each request item, so the server holds no
dataset state and any number of replicas give identical answers. Reward
numbers in the response are the exact floats the library computes; JSON
round-trips them bit-for-bit.
"""

from __future__ import annotations

import time
from typing import Any

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .rewards import MODES, TASK_KINDS, RewardConfig, gt_from_dict, total_reward

DEFAULT_MAX_BATCH = 1024


class RewardItemModel(BaseModel):
    task: str
    mode: str
    output: str
    ground_truth: dict


class ConfigOverrides(BaseModel):
    tau: float | None = Field(default=None, gt=0)
    scale_mix: float | None = Field(default=None, ge=0, le=1)


class RewardRequestModel(BaseModel):
    items: list[RewardItemModel]
    config: ConfigOverrides | None = None


def _item_errors(item: RewardItemModel, i: int) -> list[dict]:
    errors = []
    if item.task not in TASK_KINDS:
        errors.append({"loc": ["items", i, "task"], "msg": f"unknown task {item.task!r}"})
    if item.mode not in MODES:
        errors.append({"loc": ["items", i, "mode"], "msg": f"unknown mode {item.mode!r}"})
    if not errors:
        try:
            gt_from_dict(item.task, item.ground_truth)
        except Exception as exc:
            errors.append(
                {"loc": ["items", i, "ground_truth"], "msg": f"invalid ground truth: {exc}"}
            )
    return errors


def create_app(
    max_batch: int = DEFAULT_MAX_BATCH, config: RewardConfig = RewardConfig()
) -> FastAPI:
    app = FastAPI(title="geoscout reward service", version=__version__)

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        detail = [
            {"loc": list(err.get("loc", ())), "msg": err.get("msg", "invalid")}
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"detail": detail})

    @app.get("/v1/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/v1/reward")
    def reward(request: RewardRequestModel) -> Any:
        if len(request.items) > max_batch:
            return JSONResponse(
                status_code=413,
                content={"detail": f"batch of {len(request.items)} exceeds limit {max_batch}"},
            )
        errors: list[dict] = []
        for i, item in enumerate(request.items):
            errors.extend(_item_errors(item, i))
        if errors:
            return JSONResponse(status_code=400, content={"detail": errors})

        cfg = config
        if request.config is not None:
            cfg = RewardConfig(
                tau=request.config.tau if request.config.tau is not None else config.tau,
                fmt_cap=config.fmt_cap,
                reason_cap=config.reason_cap,
                acc_cap=config.acc_cap,
                scale_mix=(
                    request.config.scale_mix
                    if request.config.scale_mix is not None
                    else config.scale_mix
                ),
            )
        started = time.perf_counter()
        rewards = [
            total_reward(item.output, gt_from_dict(item.task, item.ground_truth), item.mode, cfg).as_dict()
            for item in request.items
        ]
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        return {"rewards": rewards, "engine_version": __version__, "timing_ms": elapsed_ms}

    return app
