"""Patient and screening persistence with env-selected backend.

`DATABASE_URL` picks a client-server database (postgres URLs are normalized
for the ORM); without it an embedded SQLite file under the persistent data
directory is used. `migrate` waits for the backend, creates missing tables,
and is safe to run on every startup — existing rows are never touched.
"""

from __future__ import annotations

import hashlib
import logging
import os
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from urllib.parse import urlsplit, urlunsplit

from sqlalchemy import (
    DateTime, Float, ForeignKey, Integer, String, create_engine, inspect, select, func,
)
from sqlalchemy.engine import Engine
from sqlalchemy.exc import OperationalError, SQLAlchemyError
from sqlalchemy.orm import DeclarativeBase, Mapped, Session, mapped_column

from .clinical import LABELS, SEXES
from .errors import ConfigurationError, MigrationError

log = logging.getLogger(__name__)

DEFAULT_DATA_DIR = "/var/data"
SQLITE_FILENAME = "anemiascreen.db"
_CLIENT_SERVER_SCHEMES = {"postgres", "postgresql"}


class BackendKind(str, Enum):
    CLIENT_SERVER = "client_server"
    EMBEDDED_FILE = "embedded_file"


@dataclass
class BackendReport:
    backend_kind: BackendKind
    reachable: bool
    migration_applied: bool
    url: str = ""  # credential-free form, safe to log


class Base(DeclarativeBase):
    pass


class Patient(Base):
    __tablename__ = "patients"

    # deliberately minimal: self-reported name and sex only, no other PII
    id: Mapped[int] = mapped_column(Integer, primary_key=True, autoincrement=True)
    name: Mapped[str] = mapped_column(String(200), nullable=False, index=True)
    sex: Mapped[str] = mapped_column(String(16), nullable=False, default="unspecified")
    created_at: Mapped[datetime] = mapped_column(DateTime(timezone=True), nullable=False)


class Screening(Base):
    __tablename__ = "screenings"

    id: Mapped[int] = mapped_column(Integer, primary_key=True, autoincrement=True)
    patient_id: Mapped[int] = mapped_column(ForeignKey("patients.id"), nullable=False, index=True)
    timestamp: Mapped[datetime] = mapped_column(DateTime(timezone=True), nullable=False, index=True)
    image_ref: Mapped[str] = mapped_column(String(400), nullable=False)
    predicted_label: Mapped[str] = mapped_column(String(16), nullable=False)
    confidence: Mapped[float] = mapped_column(Float, nullable=False)
    hgb_band: Mapped[str] = mapped_column(String(120), nullable=False)
    model_version: Mapped[str] = mapped_column(String(64), nullable=False)


def _redact(url: str) -> str:
    """Strip credentials so the URL can appear in logs and errors."""
    try:
        parts = urlsplit(url)
        if parts.netloc and "@" in parts.netloc:
            host = parts.netloc.rsplit("@", 1)[1]
            parts = parts._replace(netloc=f"***@{host}")
        return urlunsplit(parts)
    except ValueError:
        return "<unparseable url>"


def normalize_database_url(url: str) -> str:
    """Accept postgres:// and postgresql:// spellings; reject other schemes."""
    parts = urlsplit(url)
    scheme = parts.scheme.split("+", 1)[0]
    if scheme not in _CLIENT_SERVER_SCHEMES:
        raise ConfigurationError(
            f"DATABASE_URL has unsupported scheme {scheme!r} (url: {_redact(url)})")
    if parts.scheme == "postgres":
        parts = parts._replace(scheme="postgresql")
    return urlunsplit(parts)


def data_dir(environ: dict | None = None) -> Path:
    environ = environ if environ is not None else os.environ
    return Path(environ.get("ANEMIA_DATA_DIR", DEFAULT_DATA_DIR))


def select_backend(environ: dict | None = None) -> tuple[str, BackendKind]:
    """Resolve the connection URL and backend kind from the environment."""
    environ = environ if environ is not None else os.environ
    raw = environ.get("DATABASE_URL")
    if raw:
        url = normalize_database_url(raw)
        kind = BackendKind.CLIENT_SERVER
    else:
        path = data_dir(environ) / SQLITE_FILENAME
        path.parent.mkdir(parents=True, exist_ok=True)
        url = f"sqlite:///{path}"
        kind = BackendKind.EMBEDDED_FILE
    log.info("database backend: %s (%s)", kind.value, _redact(url))
    return url, kind


def make_engine(url: str) -> Engine:
    if url.startswith("sqlite"):
        return create_engine(url, connect_args={"check_same_thread": False})
    return create_engine(url, pool_pre_ping=True)


def migrate(engine: Engine, kind: BackendKind, max_wait_seconds: float = 30.0) -> BackendReport:
    """Wait for the backend, then create any missing tables.

    Running this twice is a no-op for both schema and data. Raises
    MigrationError if the backend stays unreachable past ``max_wait_seconds``.
    """
    deadline = time.monotonic() + max_wait_seconds
    delay = 0.25
    last_error: Exception | None = None
    while True:
        try:
            with engine.connect() as conn:
                conn.exec_driver_sql("SELECT 1")
            break
        except OperationalError as exc:
            last_error = exc
            if time.monotonic() >= deadline:
                raise MigrationError(
                    f"database unreachable after {max_wait_seconds:.0f}s: {_redact(str(engine.url))}"
                ) from last_error
            time.sleep(delay)
            delay = min(delay * 2, 2.0)

    Base.metadata.create_all(engine)  # create-if-absent; never drops or alters
    log.info("migration complete: backend=%s", kind.value)
    return BackendReport(backend_kind=kind, reachable=True, migration_applied=True,
                         url=_redact(str(engine.url)))


def schema_fingerprint(engine: Engine) -> str:
    """Stable hash of table/column structure, for idempotency checks."""
    insp = inspect(engine)
    parts = []
    for table in sorted(insp.get_table_names()):
        for col in insp.get_columns(table):
            parts.append(f"{table}.{col['name']}:{col['type']}")
    return hashlib.sha256("|".join(parts).encode()).hexdigest()


class Store:
    """Thin transactional facade over the two tables."""

    def __init__(self, engine: Engine):
        self.engine = engine

    def ping(self) -> bool:
        try:
            with self.engine.connect() as conn:
                conn.exec_driver_sql("SELECT 1")
            return True
        except SQLAlchemyError:
            return False

    def upsert_patient(self, name: str, sex: str = "unspecified") -> Patient:
        name = (name or "").strip()
        if not name:
            raise ValueError("patient name must be non-empty")
        if sex not in SEXES:
            raise ValueError(f"sex must be one of {SEXES}, got {sex!r}")
        with Session(self.engine) as session:
            patient = session.scalars(select(Patient).where(Patient.name == name)).first()
            if patient is None:
                patient = Patient(name=name, sex=sex, created_at=datetime.now(timezone.utc))
                session.add(patient)
            elif sex != "unspecified" and patient.sex != sex:
                patient.sex = sex
            session.commit()
            session.refresh(patient)
            session.expunge(patient)
            return patient

    def get_patient(self, patient_id: int) -> Patient | None:
        with Session(self.engine) as session:
            patient = session.get(Patient, patient_id)
            if patient is not None:
                session.expunge(patient)
            return patient

    def insert_screening(self, *, patient_id: int, image_ref: str, predicted_label: str,
                         confidence: float, hgb_band: str, model_version: str,
                         timestamp: datetime | None = None) -> Screening:
        if predicted_label not in LABELS:
            raise ValueError(f"predicted_label must be one of {LABELS}")
        if not 0.0 <= confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {confidence}")
        with Session(self.engine) as session:
            if session.get(Patient, patient_id) is None:
                raise ValueError(f"unknown patient_id {patient_id}")
            record = Screening(
                patient_id=patient_id,
                timestamp=timestamp or datetime.now(timezone.utc),
                image_ref=image_ref,
                predicted_label=predicted_label,
                confidence=float(confidence),
                hgb_band=hgb_band,
                model_version=model_version,
            )
            session.add(record)
            session.commit()
            session.refresh(record)
            session.expunge(record)
            return record

    def get_screening(self, screening_id: int) -> Screening | None:
        with Session(self.engine) as session:
            record = session.get(Screening, screening_id)
            if record is not None:
                session.expunge(record)
            return record

    def list_history(self, name_filter: str = "", page: int = 1,
                     page_size: int = 20) -> tuple[int, list[dict]]:
        """Newest-first screening rows joined with patient names, plus total count."""
        page = max(1, int(page))
        page_size = max(1, int(page_size))
        with Session(self.engine) as session:
            query = select(Screening, Patient).join(Patient, Screening.patient_id == Patient.id)
            if name_filter:
                query = query.where(Patient.name.ilike(f"%{name_filter}%"))
            total = session.scalar(select(func.count()).select_from(query.subquery()))
            rows = session.execute(
                query.order_by(Screening.timestamp.desc(), Screening.id.desc())
                .offset((page - 1) * page_size).limit(page_size)
            ).all()
            items = [
                {
                    "id": s.id,
                    "patient_id": p.id,
                    "patient_name": p.name,
                    "sex": p.sex,
                    "timestamp": s.timestamp.isoformat(),
                    "label": s.predicted_label,
                    "confidence": s.confidence,
                    "hgb_band": s.hgb_band,
                    "model_version": s.model_version,
                }
                for s, p in rows
            ]
        return int(total or 0), items

    def counts(self) -> tuple[int, int]:
        with Session(self.engine) as session:
            patients = session.scalar(select(func.count(Patient.id))) or 0
            screenings = session.scalar(select(func.count(Screening.id))) or 0
        return int(patients), int(screenings)


def store_image(data: bytes, directory: str | Path, suffix: str = ".jpg") -> str:
    """Write image bytes under the data directory, named by content hash."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    digest = hashlib.sha256(data).hexdigest()[:24]
    path = directory / f"{digest}{suffix}"
    if not path.exists():
        path.write_bytes(data)
    return path.name
