"""HTTP inference service.

The model is loaded once at startup from an exported checkpoint and shared,
immutable, across request handlers. Every successful prediction is persisted
before the response is returned, so any 200 response has a matching screening
record. Endpoints:

    POST /api/predict               multipart: image, patient_name, sex
    GET  /api/history               ?patient=&page=&page_size=
    GET  /api/reports/{id}.pdf
    GET  /healthz
"""

from __future__ import annotations

import io
import logging
import os
import time
from contextlib import asynccontextmanager
from dataclasses import dataclass
from pathlib import Path

import torch
from fastapi import FastAPI, Form, HTTPException, UploadFile
from fastapi.responses import Response
from fastapi.staticfiles import StaticFiles
from PIL import Image, UnidentifiedImageError

from . import modeling
from .augment import EvalTransform
from .clinical import DISCLAIMER, SEXES, hgb_band
from .persistence import (
    BackendKind, Store, data_dir, make_engine, migrate, select_backend, store_image,
)
from .report import render_report

log = logging.getLogger(__name__)

MAX_UPLOAD_BYTES = 10 * 1024 * 1024
ACCEPTED_CONTENT_TYPES = {"image/jpeg": ".jpg", "image/png": ".png"}
CLASS_LABELS = ("anemic", "non_anemic")


@dataclass
class ServiceSettings:
    checkpoint: Path | None = None
    database_url: str | None = None
    data_dir: Path | None = None
    frontend_dir: Path | None = None
    max_upload_bytes: int = MAX_UPLOAD_BYTES
    migrate_wait_seconds: float = 30.0

    @classmethod
    def from_env(cls, environ: dict | None = None) -> "ServiceSettings":
        environ = environ if environ is not None else os.environ
        checkpoint = environ.get("ANEMIA_CHECKPOINT")
        frontend = environ.get("ANEMIA_FRONTEND_DIR")
        return cls(
            checkpoint=Path(checkpoint) if checkpoint else None,
            database_url=environ.get("DATABASE_URL"),
            data_dir=data_dir(environ),
            frontend_dir=Path(frontend) if frontend else None,
        )


class ServiceState:
    """Startup-owned shared state: DB store, model bundle, transform."""

    def __init__(self, settings: ServiceSettings):
        self.settings = settings
        self.store: Store | None = None
        self.backend_kind: BackendKind | None = None
        self.bundle: modeling.ModelBundle | None = None
        self.transform = EvalTransform()
        self.image_dir = (settings.data_dir or data_dir()) / "images"

    def start(self):
        environ = dict(os.environ)
        if self.settings.database_url:
            environ["DATABASE_URL"] = self.settings.database_url
        if self.settings.data_dir:
            environ["ANEMIA_DATA_DIR"] = str(self.settings.data_dir)
        url, kind = select_backend(environ)
        engine = make_engine(url)
        migrate(engine, kind, max_wait_seconds=self.settings.migrate_wait_seconds)
        self.store = Store(engine)
        self.backend_kind = kind

        if self.settings.checkpoint:
            try:
                self.bundle, _ = modeling.load_checkpoint(self.settings.checkpoint)
                self.bundle.network.eval()
                log.info("model loaded: %s (%s)", self.settings.checkpoint, self.bundle.version)
            except Exception as exc:
                log.error("model load failed, serving degraded: %s", exc)
                self.bundle = None
        else:
            log.warning("no checkpoint configured; /api/predict will return 503")

    @property
    def model_loaded(self) -> bool:
        return self.bundle is not None


def create_app(settings: ServiceSettings | None = None) -> FastAPI:
    settings = settings or ServiceSettings.from_env()
    state = ServiceState(settings)

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        state.start()
        yield

    app = FastAPI(title="anemia screening service", lifespan=lifespan)
    app.state.service = state

    @app.get("/healthz")
    def healthz():
        reachable = state.store.ping() if state.store else False
        status = "ok" if reachable and state.model_loaded else "degraded"
        return {
            "status": status,
            "backend_kind": state.backend_kind.value if state.backend_kind else None,
            "backend_reachable": reachable,
            "model_loaded": state.model_loaded,
            "model_version": state.bundle.version if state.bundle else None,
        }

    @app.post("/api/predict")
    async def predict(image: UploadFile, patient_name: str = Form(...),
                      sex: str = Form("unspecified")):
        if state.bundle is None:
            raise HTTPException(status_code=503, detail="model not loaded")
        if sex not in SEXES:
            raise HTTPException(status_code=400, detail=f"sex must be one of {SEXES}")
        if not patient_name.strip():
            raise HTTPException(status_code=400, detail="patient_name must be non-empty")
        content_type = (image.content_type or "").split(";")[0].strip().lower()
        if content_type not in ACCEPTED_CONTENT_TYPES:
            raise HTTPException(status_code=415, detail="accepted content types: image/jpeg, image/png")

        chunks, size = [], 0
        while True:
            chunk = await image.read(1024 * 1024)
            if not chunk:
                break
            size += len(chunk)
            if size > settings.max_upload_bytes:
                raise HTTPException(status_code=413,
                                    detail=f"upload exceeds {settings.max_upload_bytes // (1024 * 1024)} MB limit")
            chunks.append(chunk)
        data = b"".join(chunks)

        try:
            with Image.open(io.BytesIO(data)) as decoded:
                decoded = decoded.convert("RGB")
                pixels = decoded.copy()
        except (UnidentifiedImageError, OSError):
            raise HTTPException(status_code=400, detail="image could not be decoded")

        t0 = time.perf_counter()
        tensor = state.transform(pixels).unsqueeze(0)
        with torch.inference_mode():
            logits = state.bundle.network(tensor)
            probs = torch.softmax(logits, dim=1)[0]
        latency_ms = (time.perf_counter() - t0) * 1000.0

        label_idx = int(probs.argmax())
        label = CLASS_LABELS[label_idx]
        confidence = float(probs[label_idx])
        band = hgb_band(label, confidence, sex)

        # persist before responding
        patient = state.store.upsert_patient(patient_name, sex)
        image_ref = store_image(data, state.image_dir, ACCEPTED_CONTENT_TYPES[content_type])
        record = state.store.insert_screening(
            patient_id=patient.id, image_ref=image_ref, predicted_label=label,
            confidence=confidence, hgb_band=band, model_version=state.bundle.version)

        return {
            "screening_id": record.id,
            "label": label,
            "confidence": confidence,
            "hgb_band": band,
            "model_version": state.bundle.version,
            "latency_ms": latency_ms,
            "disclaimer": DISCLAIMER,
        }

    @app.get("/api/history")
    def history(patient: str = "", page: int = 1, page_size: int = 20):
        if state.store is None:
            raise HTTPException(status_code=503, detail="persistence unavailable")
        total, items = state.store.list_history(patient, page, page_size)
        return {"total": total, "items": items}

    @app.get("/api/reports/{screening_id}.pdf")
    def screening_report(screening_id: int):
        if state.store is None:
            raise HTTPException(status_code=503, detail="persistence unavailable")
        screening = state.store.get_screening(screening_id)
        if screening is None:
            raise HTTPException(status_code=404, detail=f"no screening with id {screening_id}")
        patient = state.store.get_patient(screening.patient_id)
        image_path = state.image_dir / screening.image_ref if screening.image_ref else None
        pdf = render_report(patient, screening, image_path)
        return Response(content=pdf, media_type="application/pdf")

    frontend = settings.frontend_dir
    if frontend and frontend.is_dir():
        app.mount("/", StaticFiles(directory=frontend, html=True), name="frontend")

    return app


def run_server(settings: ServiceSettings, host: str = "0.0.0.0", port: int = 8000):
    """Verify the backend is reachable, then serve. Refuses to start otherwise."""
    import uvicorn

    environ = dict(os.environ)
    if settings.database_url:
        environ["DATABASE_URL"] = settings.database_url
    if settings.data_dir:
        environ["ANEMIA_DATA_DIR"] = str(settings.data_dir)
    url, kind = select_backend(environ)
    engine = make_engine(url)
    migrate(engine, kind, max_wait_seconds=settings.migrate_wait_seconds)
    engine.dispose()

    app = create_app(settings)
    uvicorn.run(app, host=host, port=port)
