"""Dataset loading, stratified splitting, and class weighting.

Datasets are plain directories with one subdirectory per class
(`anemic/`, `non_anemic/`) holding JPG/PNG files. The loaded index is
immutable and safe to share across readers.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ConfigurationError, EmptyDatasetError

log = logging.getLogger(__name__)

CLASS_NAMES = ("anemic", "non_anemic")
IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png"}
DEFAULT_FRACTIONS = (0.70, 0.10, 0.20)
MIN_SIDE = 64


class Site(str, Enum):
    CONJUNCTIVA = "conjunctiva"
    FINGERNAIL = "fingernail"
    UNKNOWN = "unknown"


def _infer_site(filename: str) -> Site:
    name = filename.lower()
    if "conj" in name or "eye" in name:
        return Site.CONJUNCTIVA
    if "nail" in name or "finger" in name:
        return Site.FINGERNAIL
    return Site.UNKNOWN


@dataclass(frozen=True)
class ImageSample:
    """One labeled photograph. Pixels are loaded lazily from ``path``."""

    id: str
    path: Path
    label: int
    site: Site = Site.UNKNOWN

    def load_pixels(self) -> np.ndarray:
        """Decode to an HxWx3 uint8 array, upscaling tiny images to >= 64px."""
        with Image.open(self.path) as img:
            img = img.convert("RGB")
            w, h = img.size
            if min(w, h) < MIN_SIDE:
                scale = MIN_SIDE / min(w, h)
                img = img.resize((max(MIN_SIDE, round(w * scale)), max(MIN_SIDE, round(h * scale))), Image.BICUBIC)
            return np.asarray(img, dtype=np.uint8)


@dataclass(frozen=True)
class DatasetIndex:
    """Immutable view over a loaded dataset directory."""

    root: Path
    samples: tuple[ImageSample, ...]
    class_names: tuple[str, ...]
    skipped: int = 0

    def __len__(self) -> int:
        return len(self.samples)

    def class_counts(self) -> np.ndarray:
        counts = np.zeros(len(self.class_names), dtype=np.int64)
        for s in self.samples:
            counts[s.label] += 1
        return counts

    def by_id(self, sample_id: str) -> ImageSample:
        return self._id_map[sample_id]

    @property
    def _id_map(self) -> dict[str, ImageSample]:
        cached = getattr(self, "_id_map_cache", None)
        if cached is None:
            cached = {s.id: s for s in self.samples}
            object.__setattr__(self, "_id_map_cache", cached)
        return cached


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train/val/test id lists plus the recipe that produced them."""

    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS
    seed: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "seed": self.seed,
                "fractions": list(self.fractions),
                "train": list(self.train),
                "val": list(self.val),
                "test": list(self.test),
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "DatasetSplit":
        doc = json.loads(text)
        return cls(
            train=tuple(doc["train"]),
            val=tuple(doc["val"]),
            test=tuple(doc["test"]),
            fractions=tuple(doc["fractions"]),
            seed=int(doc["seed"]),
        )


@dataclass(frozen=True)
class ClassWeights:
    """Inverse-frequency loss weights, one per class.

    weight_c = N / (K * n_c). The expected weight of a random sample,
    sum_c (n_c / N) * weight_c, is exactly 1, so the effective learning
    rate does not drift with class imbalance.
    """

    weights: tuple[float, ...]
    counts: tuple[int, ...] = field(default=())

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64)


def _decodable(path: Path) -> bool:
    try:
        with Image.open(path) as img:
            img.verify()
        # verify() leaves the file unusable; reopen to force a real decode
        with Image.open(path) as img:
            img.load()
        return True
    except (UnidentifiedImageError, OSError, SyntaxError):
        return False


def load_dataset(root: str | Path) -> DatasetIndex:
    """Index every decodable image under ``root``, one subdirectory per class.

    Ordering is lexicographic by path so reloading the same directory yields a
    byte-identical index. Undecodable files are skipped with a warning.
    """
    root = Path(root)
    if not root.is_dir():
        raise ConfigurationError(f"dataset root does not exist: {root}")

    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise EmptyDatasetError(f"no class subdirectories under {root}")
    class_names = tuple(p.name for p in class_dirs)

    samples: list[ImageSample] = []
    skipped = 0
    for label, class_dir in enumerate(class_dirs):
        for path in sorted(class_dir.rglob("*")):
            if not path.is_file() or path.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            if not _decodable(path):
                skipped += 1
                log.warning("skipping undecodable image: %s", path)
                continue
            rel = path.relative_to(root).as_posix()
            samples.append(ImageSample(id=rel, path=path, label=label, site=_infer_site(path.name)))

    if not samples:
        raise EmptyDatasetError(f"no decodable images under {root}")
    return DatasetIndex(root=root, samples=tuple(samples), class_names=class_names, skipped=skipped)


def _largest_remainder(n: int, fractions: Sequence[float]) -> list[int]:
    """Apportion n items to len(fractions) buckets, minimizing rounding drift."""
    targets = [n * f for f in fractions]
    alloc = [int(t) for t in targets]
    leftover = n - sum(alloc)
    order = sorted(range(len(fractions)), key=lambda i: targets[i] - alloc[i], reverse=True)
    for i in order[:leftover]:
        alloc[i] += 1
    return alloc


def stratified_split(
    index: DatasetIndex,
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
    seed: int = 0,
) -> DatasetSplit:
    """Split sample ids into train/val/test preserving class proportions.

    Uses per-class largest-remainder rounding; classes with at least 3 samples
    are guaranteed a member in every split. Deterministic given (index, seed).
    """
    if len(index) == 0:
        raise EmptyDatasetError("cannot split an empty index")
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or any(f < 0 for f in fractions):
        raise ConfigurationError(f"split fractions must be 3 non-negatives summing to 1, got {fractions}")

    rng = np.random.default_rng(seed)
    buckets: tuple[list[str], list[str], list[str]] = ([], [], [])
    for label in range(len(index.class_names)):
        ids = [s.id for s in index.samples if s.label == label]
        if not ids:
            continue
        if len(ids) < 3:
            log.warning(
                "class %r has only %d sample(s); it may be absent from some splits",
                index.class_names[label], len(ids),
            )
        ids = [ids[i] for i in rng.permutation(len(ids))]
        alloc = _largest_remainder(len(ids), fractions)
        if len(ids) >= 3:
            # guarantee representation: move one from the largest bucket into any empty one
            for b in range(3):
                if alloc[b] == 0:
                    alloc[int(np.argmax(alloc))] -= 1
                    alloc[b] += 1
        pos = 0
        for b in range(3):
            buckets[b].extend(ids[pos:pos + alloc[b]])
            pos += alloc[b]

    return DatasetSplit(
        train=tuple(buckets[0]), val=tuple(buckets[1]), test=tuple(buckets[2]),
        fractions=fractions, seed=seed,
    )


def compute_class_weights(counts: Sequence[int] | DatasetIndex) -> ClassWeights:
    """Inverse-frequency weights: weight_c = N / (K * n_c)."""
    if isinstance(counts, DatasetIndex):
        counts = counts.class_counts().tolist()
    counts = [int(c) for c in counts]
    if any(c <= 0 for c in counts):
        raise ConfigurationError(f"every class needs at least one sample to invert frequencies, got {counts}")
    total = sum(counts)
    k = len(counts)
    weights = tuple(total / (k * c) for c in counts)
    return ClassWeights(weights=weights, counts=tuple(counts))
