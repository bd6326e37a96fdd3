"""HTTP service behind the annotation UI: frame listing, live threshold
previews, annotation persistence, training, and prediction.

All mutable state (annotation log, model registry, response-map cache) lives
in the Session object; writes are serialized through one lock.
"""

from __future__ import annotations

import threading
from pathlib import Path

from fastapi import FastAPI, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import imagecore, neural, pipeline
from .datastore import AnnotationRecord, AnnotationStore, StoreError, load_manifest
from .neural import TrainConfig
from .pipeline import PipelineConfig


class Session:
    def __init__(self, manifest_path, annotations_path, models_dir, cfg: PipelineConfig,
                 train_cfg: TrainConfig | None = None):
        self.manifest = load_manifest(manifest_path)
        self.cfg = cfg
        self.cfg_hash = cfg.hash()
        self.train_cfg = train_cfg or TrainConfig()
        self.store = AnnotationStore(annotations_path, self.manifest)
        self.models_dir = Path(models_dir)
        self.models_dir.mkdir(parents=True, exist_ok=True)
        self._cache: dict[str, tuple] = {}  # frame_id -> (resp, avg)
        self._cache_lock = threading.Lock()
        self._write_lock = threading.Lock()
        self._models: dict[str, neural.MlpModel] = {}
        for path in self.models_dir.glob("*.json"):
            try:
                model = neural.load_model(path)
                self._models[model.category] = model
            except neural.ModelError:
                continue

    def response_map(self, frame_id: str):
        with self._cache_lock:
            hit = self._cache.get(frame_id)
        if hit is not None:
            return hit
        img = imagecore.load_image(self.manifest.image_path(frame_id))
        resp = pipeline.enhance(img, self.cfg)
        avg = pipeline.average_intensity(resp)
        with self._cache_lock:
            self._cache[frame_id] = (resp, avg)
        return resp, avg

    def model_for(self, category: str):
        return self._models.get(category)

    def train(self, category: str):
        with self._write_lock:
            records = [
                neural.TrainingRecord(r.frame_id, [r.average_intensity], r.manual_threshold)
                for r in self.store.load()
                if r.split == "train" and r.config_hash == self.cfg_hash
            ]
            if len(records) < 2:
                raise neural.ModelError(f"too few annotations for {category!r} (need >= 2)")
            model = neural.mlp_train(records, self.train_cfg, category=category)
            neural.save_model(model, self.models_dir / f"{category}.json")
            self._models[category] = model
            return model, records


class AnnotationBody(BaseModel):
    threshold: float


class TrainBody(BaseModel):
    category: str


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def create_app(session: Session, ui_dir=None) -> FastAPI:
    app = FastAPI(title="ntdcount annotation service")
    app.state.session = session

    @app.get("/api/frames")
    def list_frames():
        annotated = {
            r.frame_id for r in session.store.load() if r.config_hash == session.cfg_hash
        }
        return [
            {
                "frame_id": f.frame_id,
                "category": session.manifest.category,
                "split": f.split,
                "annotated": f.frame_id in annotated,
            }
            for f in sorted(session.manifest.frames, key=lambda f: f.frame_id)
        ]

    @app.get("/api/frames/{frame_id}/stats")
    def frame_stats(frame_id: str):
        try:
            session.manifest.frame(frame_id)
        except StoreError:
            return _error(404, f"unknown frame {frame_id!r}")
        resp, avg = session.response_map(frame_id)
        return {
            "frame_id": frame_id,
            "max_response": float(resp.pixels.max()),
            "average_intensity": avg,
        }

    @app.get("/api/frames/{frame_id}/preview")
    def preview(frame_id: str, t: float):
        try:
            session.manifest.frame(frame_id)
        except StoreError:
            return _error(404, f"unknown frame {frame_id!r}")
        import math

        if not math.isfinite(t):
            return _error(400, "threshold must be finite")
        resp, _ = session.response_map(frame_id)
        report = pipeline.count_peaks(
            pipeline.apply_threshold(resp, t), session.cfg, resp
        )
        img = imagecore.load_image(session.manifest.image_path(frame_id))
        overlay = imagecore.render_overlay(img, report)
        return Response(
            content=imagecore.encode_png(overlay),
            media_type="image/png",
            headers={"X-Peak-Count": str(report.count)},
        )

    @app.get("/api/frames/{frame_id}/foreground")
    def foreground(frame_id: str, t: float):
        # debug endpoint: flat indices of above-threshold pixels, for
        # monotonicity checks in tests
        try:
            session.manifest.frame(frame_id)
        except StoreError:
            return _error(404, f"unknown frame {frame_id!r}")
        resp, _ = session.response_map(frame_id)
        mask = pipeline.apply_threshold(resp, t)
        import numpy as np

        return {"count": int(mask.sum()), "indices": np.flatnonzero(mask).tolist()}

    @app.post("/api/frames/{frame_id}/annotation", status_code=204)
    def annotate(frame_id: str, body: AnnotationBody):
        try:
            frame = session.manifest.frame(frame_id)
        except StoreError:
            return _error(404, f"unknown frame {frame_id!r}")
        if frame.split == "test":
            return _error(409, "cannot annotate a test-split frame")
        _, avg = session.response_map(frame_id)
        with session._write_lock:
            session.store.record(
                AnnotationRecord(
                    frame_id=frame_id,
                    average_intensity=avg,
                    manual_threshold=body.threshold,
                    config_hash=session.cfg_hash,
                )
            )
        return Response(status_code=204)

    @app.post("/api/train")
    def train(body: TrainBody):
        try:
            model, records = session.train(body.category)
        except neural.ModelError as exc:
            return _error(400, str(exc))
        train_records = [
            neural.TrainingRecord(r.frame_id, [r.average_intensity], r.manual_threshold)
            for r in session.store.load()
            if r.split == "train" and r.config_hash == session.cfg_hash
        ]
        return {
            "final_rmse": neural.training_rmse(model, train_records),
            "n_records": len(records),
        }

    @app.get("/api/frames/{frame_id}/prediction")
    def prediction(frame_id: str):
        try:
            session.manifest.frame(frame_id)
        except StoreError:
            return _error(404, f"unknown frame {frame_id!r}")
        model = session.model_for(session.manifest.category)
        if model is None:
            return _error(409, "no trained model for this category yet")
        resp, avg = session.response_map(frame_id)
        threshold = neural.mlp_predict(model, [avg])
        report = pipeline.count_peaks(
            pipeline.apply_threshold(resp, threshold), session.cfg, resp
        )
        return {"threshold": threshold, "count": report.count}

    if ui_dir:
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
