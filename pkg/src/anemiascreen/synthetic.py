"""Synthetic two-class image corpus for pipeline sanity checks.

Generates pallid (pale, desaturated) vs saturated (vivid red/pink) tissue-like
patches. The classes are separable by dominant hue/saturation, so any
converging trainer should reach high validation accuracy quickly; this is a
plumbing check, not a clinical benchmark.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .datapipe import CLASS_NAMES


def _patch(rng: np.random.Generator, base_rgb: tuple[float, float, float],
           jitter: float, size: int) -> np.ndarray:
    base = np.array(base_rgb, dtype=np.float32)
    img = np.tile(base, (size, size, 1))
    img += rng.normal(0.0, jitter, size=img.shape).astype(np.float32)
    # low-frequency shading so images are not flat color fields
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32) / size
    phase = rng.uniform(0, 2 * np.pi, size=2)
    shading = 12.0 * (np.sin(2 * np.pi * xx + phase[0]) + np.cos(2 * np.pi * yy + phase[1]))
    img += shading[..., None]
    return np.clip(img, 0, 255).astype(np.uint8)


def generate_corpus(out_dir: str | Path, count: int = 400, seed: int = 7,
                    size: int = 160) -> Path:
    """Write ``count`` images split evenly between the two classes."""
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    per_class = count // 2
    specs = {
        # pallid: pale pinkish gray, low saturation
        CLASS_NAMES[0]: ((215.0, 196.0, 192.0), 18.0),
        # healthy tissue: saturated red/pink
        CLASS_NAMES[1]: ((205.0, 80.0, 95.0), 22.0),
    }
    for class_name, (base, jitter) in specs.items():
        class_dir = out_dir / class_name
        class_dir.mkdir(parents=True, exist_ok=True)
        for i in range(per_class):
            drift = rng.normal(0.0, 8.0, size=3)
            img = _patch(rng, tuple(np.array(base) + drift), jitter, size)
            Image.fromarray(img).save(class_dir / f"sample_{i:04d}.png")
    return out_dir


if __name__ == "__main__":
    import argparse

    parser = argparse.ArgumentParser(description="Generate a synthetic screening corpus")
    parser.add_argument("--out", required=True)
    parser.add_argument("--count", type=int, default=400)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()
    generate_corpus(args.out, count=args.count, seed=args.seed)
    print(f"wrote {args.count} images under {args.out}")
