"""Shared test utilities: image fixtures and a minimal PDF text extractor."""

from __future__ import annotations

import base64
import io
import re
import zlib
from pathlib import Path

import numpy as np
from PIL import Image


def make_image(size=(320, 240), color=(180, 90, 100), noise=0.0, seed=0) -> Image.Image:
    arr = np.tile(np.array(color, dtype=np.float32), (size[1], size[0], 1))
    if noise:
        arr += np.random.default_rng(seed).normal(0, noise, arr.shape).astype(np.float32)
    return Image.fromarray(np.clip(arr, 0, 255).astype(np.uint8))


def image_bytes(fmt="JPEG", **kwargs) -> bytes:
    buf = io.BytesIO()
    make_image(**kwargs).save(buf, format=fmt)
    return buf.getvalue()


def make_corpus(root: Path, per_class=6, size=(96, 96)) -> Path:
    """Tiny anemic/non_anemic directory corpus for loader tests."""
    for name, color in (("anemic", (210, 195, 190)), ("non_anemic", (200, 80, 90))):
        d = root / name
        d.mkdir(parents=True, exist_ok=True)
        for i in range(per_class):
            make_image(size=size, color=color, noise=10.0, seed=i).save(d / f"img_{i:03d}.png")
    return root


_ESCAPES = {b"n": b"\n", b"r": b"\r", b"t": b"\t", b"b": b"\b", b"f": b"\f",
            b"(": b"(", b")": b")", b"\\": b"\\"}


def _unescape_pdf_string(body: bytes) -> bytes:
    out = bytearray()
    i = 0
    while i < len(body):
        ch = body[i:i + 1]
        if ch == b"\\" and i + 1 < len(body):
            nxt = body[i + 1:i + 2]
            if nxt in _ESCAPES:
                out += _ESCAPES[nxt]
                i += 2
                continue
            if nxt.isdigit():  # octal escape, up to 3 digits
                j = i + 1
                digits = b""
                while j < len(body) and len(digits) < 3 and body[j:j + 1].isdigit():
                    digits += body[j:j + 1]
                    j += 1
                out.append(int(digits, 8))
                i = j
                continue
        out += ch
        i += 1
    return bytes(out)


def extract_pdf_text(data: bytes) -> str:
    """Pull show-text strings out of a simple (reportlab-style) PDF.

    Handles ASCII85- and Flate-encoded content streams and octal escapes;
    text is decoded as WinAnsi (cp1252), which covers the built-in fonts.
    """
    assert data.startswith(b"%PDF-"), "not a PDF"
    texts: list[str] = []
    for chunk in re.findall(rb"stream\r?\n(.*?)endstream", data, re.DOTALL):
        raw = chunk.strip(b"\r\n")
        for decode in (
            lambda b: zlib.decompress(base64.a85decode(b, adobe=True)),
            lambda b: base64.a85decode(b, adobe=True),
            zlib.decompress,
            lambda b: b,
        ):
            try:
                content = decode(raw)
                break
            except Exception:
                continue
        if b"Tj" not in content and b"TJ" not in content:
            continue
        for match in re.findall(rb"\(((?:\\.|[^\\()])*)\)\s*T[jJ]", content, re.DOTALL):
            texts.append(_unescape_pdf_string(match).decode("cp1252", errors="replace"))
    return "\n".join(texts)
