"""Single-screening PDF report.

Every displayed value comes from the persisted records; nothing is
re-inferred at render time, so two renders of the same payload carry
identical text. Single A4 page, built-in fonts only.
"""

from __future__ import annotations

import io
import logging
from pathlib import Path

from PIL import Image
from reportlab.lib.pagesizes import A4
from reportlab.lib.units import mm
from reportlab.lib.utils import ImageReader
from reportlab.pdfgen import canvas

from .clinical import DISCLAIMER
from .persistence import Patient, Screening

log = logging.getLogger(__name__)

THUMBNAIL_MAX_SIDE = 300


def _thumbnail(image_path: Path) -> Image.Image:
    with Image.open(image_path) as img:
        img = img.convert("RGB")
        img.thumbnail((THUMBNAIL_MAX_SIDE, THUMBNAIL_MAX_SIDE))
        return img.copy()


def render_report(patient: Patient, screening: Screening,
                  image_path: str | Path | None = None) -> bytes:
    """Render the report PDF. A missing image yields a placeholder, not a failure."""
    buf = io.BytesIO()
    page = canvas.Canvas(buf, pagesize=A4)
    width, height = A4
    margin = 20 * mm
    y = height - margin

    page.setFont("Helvetica-Bold", 18)
    page.drawString(margin, y, "Anemia Screening Report")
    y -= 6 * mm
    page.setLineWidth(0.8)
    page.line(margin, y, width - margin, y)
    y -= 12 * mm

    label_text = "Anemic" if screening.predicted_label == "anemic" else "Non-Anemic"
    rows = [
        ("Patient", patient.name),
        ("Sex", patient.sex),
        ("Date", screening.timestamp.isoformat()),
        ("Diagnosis", label_text),
        ("Confidence", f"{screening.confidence * 100:.1f}%"),
        ("Hgb band", screening.hgb_band),
        ("Model version", screening.model_version),
        ("Screening ID", str(screening.id)),
    ]
    for key, value in rows:
        page.setFont("Helvetica-Bold", 11)
        page.drawString(margin, y, f"{key}:")
        page.setFont("Helvetica", 11)
        page.drawString(margin + 40 * mm, y, str(value))
        y -= 7 * mm

    y -= 6 * mm
    box_side = 70 * mm
    image_ok = False
    if image_path is not None and Path(image_path).is_file():
        try:
            thumb = _thumbnail(Path(image_path))
            reader = ImageReader(thumb)
            iw, ih = thumb.size
            scale = min(box_side / iw, box_side / ih)
            page.drawImage(reader, margin, y - ih * scale, width=iw * scale, height=ih * scale)
            image_ok = True
        except OSError as exc:
            log.warning("could not embed report thumbnail %s: %s", image_path, exc)
    if not image_ok:
        log.warning("report %s rendered with image placeholder (ref %r)",
                    screening.id, screening.image_ref)
        page.rect(margin, y - box_side, box_side, box_side)
        page.setFont("Helvetica-Oblique", 10)
        page.drawString(margin + 8 * mm, y - box_side / 2, "image unavailable")

    page.setFont("Helvetica-Oblique", 9)
    page.drawCentredString(width / 2, margin, DISCLAIMER)
    page.showPage()
    page.save()
    return buf.getvalue()
