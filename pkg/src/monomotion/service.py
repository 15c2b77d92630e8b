"""Local HTTP service exposing generation, composition, evaluation and
training over JSON/MotionJSON payloads.

Inference endpoints run synchronously when they finish within the latency
budget and fall back to job mode otherwise; training always runs as a job,
with a single-writer lock per model id. Motion ids are content hashes, so a
restart with the same checkpoints replays identical responses for identical
requests.
"""
from __future__ import annotations

import hashlib
import json
import threading
import uuid
from concurrent.futures import Future, ThreadPoolExecutor, TimeoutError as FutureTimeout
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import apps
from .motion_io import (
    MotionTensor,
    StructuralError,
    from_feature_tensor,
    motion_from_json_dict,
    motion_to_json_dict,
    to_feature_tensor,
)
from .network import CheckpointError, PyramidModel, StateError, load_checkpoint


@dataclass
class ServiceConfig:
    checkpoint_root: str = "."
    latency_budget_s: float = 0.2
    max_workers: int = 4


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, detail=None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.detail = detail


@dataclass
class JobRecord:
    job_id: str
    kind: str  # train / generate / compose / evaluate / analyze
    status: str = "queued"  # queued -> running -> done | failed
    progress: float = 0.0
    artifacts: list[str] = field(default_factory=list)
    log_tail: list[str] = field(default_factory=list)
    error: dict | None = None

    def to_json_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "kind": self.kind,
            "status": self.status,
            "progress": self.progress,
            "artifacts": self.artifacts,
            "log_tail": self.log_tail[-20:],
            "error": self.error,
        }


class ModelRegistry:
    """Lazy checkpoint loader over a directory of *.ckpt files."""

    def __init__(self, root: str):
        self.root = Path(root)
        self._cache: dict[str, PyramidModel] = {}
        self._lock = threading.Lock()

    def ids(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.ckpt"))

    def get(self, model_id: str) -> PyramidModel:
        with self._lock:
            if model_id in self._cache:
                return self._cache[model_id]
        path = self.root / f"{model_id}.ckpt"
        if not path.exists():
            raise ApiError(404, "unknown_model", f"no checkpoint named {model_id!r}")
        try:
            model = load_checkpoint(path.read_bytes())
        except CheckpointError as exc:
            raise ApiError(500, "bad_checkpoint", str(exc)) from exc
        with self._lock:
            self._cache[model_id] = model
        return model

    def invalidate(self, model_id: str):
        with self._lock:
            self._cache.pop(model_id, None)


class MotionStore:
    """Content-addressed motion cache (id = hash of the payload)."""

    def __init__(self):
        self._items: dict[str, dict] = {}
        self._lock = threading.Lock()

    def put(self, payload: dict) -> str:
        blob = json.dumps(payload, sort_keys=True).encode()
        motion_id = hashlib.sha1(blob).hexdigest()[:16]
        with self._lock:
            self._items[motion_id] = payload
        return motion_id

    def get(self, motion_id: str) -> dict:
        with self._lock:
            if motion_id not in self._items:
                raise ApiError(404, "unknown_motion", f"no motion {motion_id!r}")
            return self._items[motion_id]


class GenerateBody(BaseModel):
    model: str
    seed: int = 0
    frames: int | None = None


class BodyPartBody(BaseModel):
    model: str
    mask: dict
    level: int = 1
    seed: int = 0
    reference_motion: dict | None = None


class InpaintBody(BaseModel):
    model: str
    frame_mask: dict
    seed: int = 0
    reference_motion: dict | None = None


class RoiBody(BaseModel):
    model: str
    placements: list[dict]
    frames: int
    seed: int = 0
    source_motion: dict | None = None


class RestyleBody(BaseModel):
    style_model: str
    content_motion: dict
    seed: int = 0


class CrowdBody(BaseModel):
    model: str
    n: int = 4
    seed: int = 0


class TrainBody(BaseModel):
    model_id: str
    input_motion: dict
    preset: str = "abl9-smoke"
    seed: int = 0
    iteration_unit: float | None = None


def _motion_payload(tensor: MotionTensor) -> dict:
    return motion_to_json_dict(from_feature_tensor(tensor))


def _tensor_from_payload(payload: dict) -> MotionTensor:
    try:
        return to_feature_tensor(motion_from_json_dict(payload))
    except (KeyError, ValueError, StructuralError) as exc:
        raise ApiError(422, "invalid_motion", f"bad MotionJSON payload: {exc}") from exc


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    registry = ModelRegistry(config.checkpoint_root)
    motions = MotionStore()
    jobs: dict[str, JobRecord] = {}
    jobs_lock = threading.Lock()
    train_locks: dict[str, threading.Lock] = {}
    train_locks_guard = threading.Lock()
    executor = ThreadPoolExecutor(max_workers=config.max_workers)

    app = FastAPI(title="monomotion service")

    @app.exception_handler(ApiError)
    async def _api_error(_req: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status,
            content={"code": exc.code, "message": exc.message, "detail": exc.detail},
        )

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_req: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=422,
            content={
                "code": "invalid_request",
                "message": "request body failed validation",
                "detail": exc.errors(),
            },
        )

    @app.exception_handler(Exception)
    async def _unhandled(_req: Request, exc: Exception):
        return JSONResponse(
            status_code=500,
            content={
                "code": "internal_error",
                "message": f"{type(exc).__name__}: {exc}",
                "detail": None,
            },
        )

    def _new_job(kind: str) -> JobRecord:
        record = JobRecord(job_id=uuid.uuid4().hex[:12], kind=kind, status="queued")
        with jobs_lock:
            jobs[record.job_id] = record
        return record

    def _run_inference(kind: str, fn):
        """Run fn() synchronously within the latency budget, else as a job."""
        record = _new_job(kind)

        def task():
            record.status = "running"
            try:
                payloads = fn()
                ids = [motions.put(p) for p in payloads]
                record.artifacts = ids
                record.progress = 1.0
                record.status = "done"
                return ids
            except ApiError as exc:
                record.status = "failed"
                record.error = {"code": exc.code, "message": exc.message}
                raise
            except Exception as exc:
                record.status = "failed"
                record.error = {"code": "internal_error", "message": str(exc)}
                raise

        future: Future = executor.submit(task)
        try:
            ids = future.result(timeout=config.latency_budget_s)
        except FutureTimeout:
            return JSONResponse(status_code=202, content={"job": record.to_json_dict()})
        # surface errors from the synchronous path
        if record.status == "failed" and record.error:
            raise ApiError(
                422 if record.error["code"] != "internal_error" else 500,
                record.error["code"],
                record.error["message"],
            )
        body = {"motions": ids, "job": record.to_json_dict()}
        if len(ids) == 1:
            body["motion"] = motions.get(ids[0])
            body["motion_id"] = ids[0]
        return body

    def _reference(model: PyramidModel, payload: dict | None) -> MotionTensor:
        if payload is not None:
            return _tensor_from_payload(payload)
        if model.input_motion is None:
            raise ApiError(
                422, "missing_reference",
                "checkpoint stores no training clip; pass reference_motion",
            )
        return model.input_motion

    def _wrap_mask_errors(fn):
        try:
            return fn()
        except (apps.MaskError, apps.PlacementError, StructuralError, ValueError) as exc:
            raise ApiError(422, "invalid_mask", str(exc)) from exc
        except StateError as exc:
            raise ApiError(409, "model_not_ready", str(exc)) from exc

    @app.get("/models")
    def list_models():
        return {"models": registry.ids()}

    @app.get("/models/{model_id}")
    def model_info(model_id: str):
        model = registry.get(model_id)
        return {
            "id": model_id,
            "stage_lengths": list(model.pyramid.stage_lengths),
            "level_grouping": list(model.pyramid.level_grouping),
            "trained": model.trained,
            "frame_rate": model.frame_rate,
            "joint_names": list(model.topology.joint_names),
            "contact_joints": list(model.topology.contact_joints),
            "has_training_clip": model.input_motion is not None,
            "training": model.training_meta,
        }

    @app.post("/generate")
    def generate(body: GenerateBody):
        model = registry.get(body.model)

        def fn():
            out = _wrap_mask_errors(
                lambda: model.generate_full(body.seed, length_override=body.frames)
            )
            return [_motion_payload(out)]

        return _run_inference("generate", fn)

    @app.post("/compose/bodypart")
    def compose_bodypart(body: BodyPartBody):
        model = registry.get(body.model)

        def fn():
            def inner():
                mask, _ = apps.mask_from_json(body.mask)
                reference = _reference(model, body.reference_motion)
                out = apps.body_part_compose(
                    model, reference, mask, level=body.level, seed=body.seed
                )
                return [_motion_payload(out)]

            return _wrap_mask_errors(inner)

        return _run_inference("compose", fn)

    @app.post("/compose/inpaint")
    def compose_inpaint(body: InpaintBody):
        model = registry.get(body.model)

        def fn():
            def inner():
                _, ranges = apps.mask_from_json({"frames": body.frame_mask.get("frames", [])})
                splice = model.pyramid.stage_lengths[
                    model.pyramid.stages_of_level(1)[0] - 1
                ]
                length = body.frame_mask.get("length", splice)
                fm = apps.FrameMask(tuple(ranges), length)
                reference = _reference(model, body.reference_motion)
                out = apps.inpaint(model, reference, fm, seed=body.seed)
                return [_motion_payload(out)]

            return _wrap_mask_errors(inner)

        return _run_inference("compose", fn)

    @app.post("/compose/roi")
    def compose_roi(body: RoiBody):
        model = registry.get(body.model)

        def fn():
            def inner():
                source = _reference(model, body.source_motion)
                placements = []
                for p in body.placements:
                    try:
                        placements.append(
                            apps.RoiPlacement(
                                source,
                                int(p["source_start"]),
                                int(p["source_end"]),
                                int(p["target_start"]),
                            )
                        )
                    except KeyError as exc:
                        raise apps.PlacementError(f"placement missing field {exc}")
                out = apps.place_rois(model, placements, body.frames, seed=body.seed)
                return [_motion_payload(out)]

            return _wrap_mask_errors(inner)

        return _run_inference("compose", fn)

    @app.post("/restyle")
    def restyle(body: RestyleBody):
        model = registry.get(body.style_model)

        def fn():
            content = _tensor_from_payload(body.content_motion)
            out = _wrap_mask_errors(lambda: apps.restyle(model, content, seed=body.seed))
            return [_motion_payload(out)]

        return _run_inference("compose", fn)

    @app.post("/crowd")
    def crowd(body: CrowdBody):
        model = registry.get(body.model)

        def fn():
            outs = _wrap_mask_errors(lambda: apps.crowd(model, body.n, seed=body.seed))
            return [_motion_payload(o) for o in outs]

        return _run_inference("generate", fn)

    @app.post("/train")
    def train(body: TrainBody):
        from .network import save_checkpoint
        from .training import preset as preset_cfg
        from .training import train_all

        clip = _tensor_from_payload(body.input_motion)
        try:
            cfg = preset_cfg(body.preset)
        except ValueError as exc:
            raise ApiError(422, "invalid_preset", str(exc)) from exc
        cfg.seed = body.seed
        if body.iteration_unit is not None:
            cfg.iteration_unit = body.iteration_unit
        with train_locks_guard:
            lock = train_locks.setdefault(body.model_id, threading.Lock())
        if not lock.acquire(blocking=False):
            raise ApiError(
                409, "training_locked",
                f"a training job already runs for {body.model_id!r}",
            )
        record = _new_job("train")

        def task():
            record.status = "running"
            try:
                model, report = train_all(clip, cfg)
                path = registry.root / f"{body.model_id}.ckpt"
                path.write_bytes(save_checkpoint(model))
                registry.invalidate(body.model_id)
                record.artifacts = [body.model_id]
                record.log_tail.append(
                    f"final_lrec={report.final_lrec:.4f} "
                    f"iterations={report.total_iterations}"
                )
                record.progress = 1.0
                record.status = "done"
            except Exception as exc:
                record.status = "failed"
                record.error = {"code": "training_failed", "message": str(exc)}
            finally:
                lock.release()

        executor.submit(task)
        return JSONResponse(status_code=202, content={"job": record.to_json_dict()})

    @app.get("/jobs/{job_id}")
    def job_info(job_id: str):
        with jobs_lock:
            if job_id not in jobs:
                raise ApiError(404, "unknown_job", f"no job {job_id!r}")
            return jobs[job_id].to_json_dict()

    @app.get("/motions/{motion_id}")
    def motion(motion_id: str):
        return motions.get(motion_id)

    return app
