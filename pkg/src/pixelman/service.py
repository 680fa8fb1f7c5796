"""HTTP service exposing edit jobs for the browser editor and scripts.

Endpoints:
    POST /api/edit              base64-JSON edit request -> {"job_id": ...}
    GET  /api/jobs/{id}         job state, progress, latest preview
    GET  /api/jobs/{id}/result  output PNG
    GET  /api/health            build/backend info
"""
from __future__ import annotations

import base64
import itertools
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import torch
from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel, Field

from . import __version__
from .config import sampler_config_from_dict
from .errors import BackendUnavailableError, PixelManError
from .io import decode_image_bytes, decode_mask_bytes, encode_png_bytes
from .sampler import EditRequest, SamplerReport, run_edit


class EditPayload(BaseModel):
    image: str = Field(description="base64 PNG/JPEG source image")
    mask: str = Field(description="base64 single-channel PNG object mask")
    task: str = "move"
    dx: int = 0
    dy: int = 0
    scale: float = 1.0
    reference: Optional[str] = None
    config: dict = Field(default_factory=dict)


@dataclass
class EditJob:
    id: str
    state: str = "queued"  # queued -> running -> done | failed
    progress: float = 0.0
    preview_png: Optional[bytes] = None
    result_png: Optional[bytes] = None
    report: Optional[SamplerReport] = None
    error: Optional[str] = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    def advance(self, state: str) -> None:
        order = ["queued", "running", "done", "failed"]
        if order.index(state) < order.index(self.state):
            raise RuntimeError(f"illegal state transition {self.state} -> {state}")
        self.state = state


class JobStore:
    def __init__(self, max_jobs: int = 2):
        self._jobs: dict[str, EditJob] = {}
        self._lock = threading.Lock()
        self._ids = itertools.count(1)
        self.pool = ThreadPoolExecutor(max_workers=max_jobs)

    def create(self) -> EditJob:
        with self._lock:
            job = EditJob(id=f"job-{next(self._ids)}")
            self._jobs[job.id] = job
            return job

    def get(self, job_id: str) -> EditJob:
        with self._lock:
            if job_id not in self._jobs:
                raise KeyError(job_id)
            return self._jobs[job_id]

    def shutdown(self) -> None:
        self.pool.shutdown(wait=True)


def _b64_decode(data: str) -> bytes:
    if "," in data:  # tolerate data: URLs
        data = data.split(",", 1)[1]
    return base64.b64decode(data)


def _execute(job: EditJob, request: EditRequest, cfg) -> None:
    with job.lock:
        job.advance("running")
    try:
        def on_step(done: int, total: int, preview: Optional[torch.Tensor]) -> None:
            with job.lock:
                job.progress = done / total
                if preview is not None:
                    job.preview_png = encode_png_bytes(preview)

        report = run_edit(request, cfg, on_step=on_step)
        with job.lock:
            job.report = report
            job.result_png = encode_png_bytes(report.output)
            job.progress = 1.0
            job.advance("done")
    except Exception as exc:
        with job.lock:
            job.error = str(exc)
            job.advance("failed")


def create_app(default_config: Optional[dict] = None, max_jobs: int = 2,
               backend_id: str = "toy") -> FastAPI:
    app = FastAPI(title="pixelman", version=__version__)
    store = JobStore(max_jobs=max_jobs)
    app.state.store = store
    base_config = dict(default_config or {})
    base_config.setdefault("backend", backend_id)

    @app.get("/api/health")
    def health():
        return {"status": "ok", "version": __version__,
                "backend": base_config.get("backend")}

    @app.post("/api/edit")
    def submit(payload: EditPayload):
        try:
            merged = dict(base_config)
            merged.update(payload.config or {})
            cfg = sampler_config_from_dict(merged)
            request = EditRequest(
                task=payload.task,
                image=decode_image_bytes(_b64_decode(payload.image)),
                object_mask=decode_mask_bytes(_b64_decode(payload.mask)),
                dx=payload.dx, dy=payload.dy, scale=payload.scale,
                reference=(decode_image_bytes(_b64_decode(payload.reference))
                           if payload.reference else None),
            )
        except BackendUnavailableError as exc:
            raise HTTPException(503, str(exc))
        except (PixelManError, ValueError, KeyError, TypeError) as exc:
            raise HTTPException(400, str(exc))
        if cfg.backend == "ldm" and not cfg.weights_path:
            raise HTTPException(503, "ldm backend unavailable without weights")
        job = store.create()
        store.pool.submit(_execute, job, request, cfg)
        return {"job_id": job.id}

    def _get_job(job_id: str) -> EditJob:
        try:
            return store.get(job_id)
        except KeyError:
            raise HTTPException(404, f"unknown job {job_id}")

    @app.get("/api/jobs/{job_id}")
    def job_status(job_id: str):
        job = _get_job(job_id)
        with job.lock:
            body = {"id": job.id, "state": job.state, "progress": job.progress,
                    "error": job.error,
                    "preview": (base64.b64encode(job.preview_png).decode()
                                if job.preview_png else None)}
            if job.report is not None:
                body["report"] = job.report.summary()
        return body

    @app.get("/api/jobs/{job_id}/result")
    def job_result(job_id: str):
        job = _get_job(job_id)
        with job.lock:
            if job.state == "failed":
                raise HTTPException(400, job.error or "job failed")
            if job.state != "done" or job.result_png is None:
                raise HTTPException(404, "result not ready")
            return Response(content=job.result_png, media_type="image/png")

    return app
