"""Image transform stacks for training and evaluation.

The training stack applies, in order: bicubic resize, random crop with
reflect padding, horizontal/vertical flips, TrivialAugmentWide, color
jitter, random affine, gaussian blur, tensor conversion + channel
normalization, and random erasing (in normalized space). Every stochastic
step draws from one explicit torch.Generator, so a transform built with a
fixed seed replays the identical augmentation sequence.

The evaluation stack is the deterministic subset: resize, center crop,
normalize.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
import torch
from PIL import Image
from torchvision.transforms import InterpolationMode
from torchvision.transforms import functional as TF

# Channel statistics of the pretrained backbone's source corpus; required for
# transfer from the pretrained weights.
NORM_MEAN = (0.485, 0.456, 0.406)
NORM_STD = (0.229, 0.224, 0.225)

NUM_TRIVIAL_OPS = 14
NUM_MAGNITUDE_BINS = 31


@dataclass
class AugmentConfig:
    """Training augmentation recipe. Defaults follow the full training profile."""

    resize_px: int = 341
    crop_px: int = 300
    hflip_p: float = 0.5
    vflip_p: float = 0.2
    trivial_augment_enabled: bool = True
    jitter_brightness: float = 0.4
    jitter_contrast: float = 0.4
    affine_max_shear_deg: float = 10.0
    affine_max_translate: float = 0.10
    blur_p: float = 0.2
    erase_p: float = 0.25
    erase_area_range: tuple[float, float] = (0.02, 0.33)
    erase_aspect_range: tuple[float, float] = (0.3, 3.3)
    crop_mode: str = "random"  # "random" | "center"

    def __post_init__(self):
        for name in ("hflip_p", "vflip_p", "blur_p", "erase_p"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if self.crop_px > self.resize_px:
            raise ValueError(f"crop_px {self.crop_px} exceeds resize_px {self.resize_px}")
        lo, hi = self.erase_area_range
        if not 0.0 < lo < hi < 1.0:
            raise ValueError(f"erase_area_range must satisfy 0 < lo < hi < 1, got {self.erase_area_range}")
        if self.crop_mode not in ("random", "center"):
            raise ValueError(f"crop_mode must be 'random' or 'center', got {self.crop_mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "AugmentConfig":
        doc = dict(doc)
        for key in ("erase_area_range", "erase_aspect_range"):
            if key in doc:
                doc[key] = tuple(doc[key])
        return cls(**doc)


@dataclass(frozen=True)
class TrivialAugmentOp:
    """One sampled photometric/geometric operation and its strength."""

    name: str
    magnitude_bin: int  # uniform over [0, 30]
    sign: int = 1       # +1/-1 for signed ops, ignored otherwise


# Wide-range magnitude tables. Each entry maps the bin in [0, 30] to the
# op-specific parameter; bin 0 is always the weakest setting.
def _frac(bin_idx: int) -> float:
    return bin_idx / (NUM_MAGNITUDE_BINS - 1)


TRIVIAL_OP_NAMES = (
    "identity", "auto-contrast", "equalize", "rotate", "solarize", "color",
    "posterize", "contrast", "brightness", "sharpness", "shear-x", "shear-y",
    "translate-x", "translate-y",
)
_SIGNED_OPS = frozenset({
    "rotate", "color", "contrast", "brightness", "sharpness",
    "shear-x", "shear-y", "translate-x", "translate-y",
})


def sample_trivial_op(rng: torch.Generator) -> TrivialAugmentOp:
    """Draw one op uniformly over the 14 operations and one magnitude bin over [0, 30]."""
    op_idx = int(torch.randint(NUM_TRIVIAL_OPS, (1,), generator=rng).item())
    bin_idx = int(torch.randint(NUM_MAGNITUDE_BINS, (1,), generator=rng).item())
    name = TRIVIAL_OP_NAMES[op_idx]
    sign = 1
    if name in _SIGNED_OPS and torch.rand(1, generator=rng).item() < 0.5:
        sign = -1
    return TrivialAugmentOp(name=name, magnitude_bin=bin_idx, sign=sign)


def apply_trivial_op(img: Image.Image, op: TrivialAugmentOp) -> Image.Image:
    """Apply ``op`` to a PIL image, preserving its size."""
    m = _frac(op.magnitude_bin)
    s = op.sign
    name = op.name
    if name == "identity":
        return img
    if name == "auto-contrast":
        return TF.autocontrast(img)
    if name == "equalize":
        return TF.equalize(img)
    if name == "rotate":
        return TF.rotate(img, s * 135.0 * m)
    if name == "solarize":
        return TF.solarize(img, 255.0 * (1.0 - m))
    if name == "color":
        return TF.adjust_saturation(img, max(0.0, 1.0 + s * 0.99 * m))
    if name == "posterize":
        return TF.posterize(img, 8 - round(6 * m))
    if name == "contrast":
        return TF.adjust_contrast(img, max(0.0, 1.0 + s * 0.99 * m))
    if name == "brightness":
        return TF.adjust_brightness(img, max(0.0, 1.0 + s * 0.99 * m))
    if name == "sharpness":
        return TF.adjust_sharpness(img, max(0.0, 1.0 + s * 0.99 * m))
    if name == "shear-x":
        return TF.affine(img, angle=0.0, translate=[0, 0], scale=1.0,
                         shear=[math.degrees(math.atan(s * 0.99 * m)), 0.0])
    if name == "shear-y":
        return TF.affine(img, angle=0.0, translate=[0, 0], scale=1.0,
                         shear=[0.0, math.degrees(math.atan(s * 0.99 * m))])
    if name == "translate-x":
        return TF.affine(img, angle=0.0, translate=[int(round(s * 32.0 * m)), 0], scale=1.0, shear=[0.0, 0.0])
    if name == "translate-y":
        return TF.affine(img, angle=0.0, translate=[0, int(round(s * 32.0 * m))], scale=1.0, shear=[0.0, 0.0])
    raise ValueError(f"unknown trivial-augment op {name!r}")


def trivial_augment(img: Image.Image, rng: torch.Generator) -> Image.Image:
    """Apply exactly one uniformly sampled op at a uniformly sampled magnitude."""
    return apply_trivial_op(img, sample_trivial_op(rng))


def random_erase(tensor: torch.Tensor, config: AugmentConfig, rng: torch.Generator) -> torch.Tensor:
    """With probability erase_p, replace one rectangle with per-pixel noise.

    The rectangle's area fraction falls inside erase_area_range and its aspect
    ratio inside erase_aspect_range (checked post-rounding, so measured
    fractions respect the bounds). After 10 failed placement attempts the
    input is returned unchanged. Runs in normalized space with standard-normal
    noise.
    """
    if config.erase_p <= 0.0 or torch.rand(1, generator=rng).item() >= config.erase_p:
        return tensor
    _, height, width = tensor.shape
    area = height * width
    lo, hi = config.erase_area_range
    a_lo, a_hi = config.erase_aspect_range
    for _ in range(10):
        target = area * (lo + (hi - lo) * torch.rand(1, generator=rng).item())
        aspect = math.exp(math.log(a_lo) + (math.log(a_hi) - math.log(a_lo)) * torch.rand(1, generator=rng).item())
        h = int(round(math.sqrt(target * aspect)))
        w = int(round(math.sqrt(target / aspect)))
        if h < 1 or w < 1 or h > height or w > width:
            continue
        if not (lo <= (h * w) / area <= hi):
            continue
        top = int(torch.randint(height - h + 1, (1,), generator=rng).item())
        left = int(torch.randint(width - w + 1, (1,), generator=rng).item())
        out = tensor.clone()
        noise = torch.empty((tensor.shape[0], h, w), dtype=tensor.dtype)
        noise.normal_(generator=rng)
        out[:, top:top + h, left:left + w] = noise
        return out
    return tensor


def _to_rgb(img: Image.Image | np.ndarray) -> Image.Image:
    if isinstance(img, np.ndarray):
        img = Image.fromarray(img)
    if img.mode != "RGB":
        img = img.convert("RGB")
    return img


class TrainTransform:
    """Callable training transform; all randomness flows from the seed given at build time."""

    def __init__(self, config: AugmentConfig | None = None, seed: int = 0):
        self.config = config or AugmentConfig()
        self.rng = torch.Generator().manual_seed(seed)

    def _rand(self) -> float:
        return torch.rand(1, generator=self.rng).item()

    def __call__(self, img: Image.Image | np.ndarray) -> torch.Tensor:
        cfg = self.config
        img = _to_rgb(img)
        img = TF.resize(img, [cfg.resize_px, cfg.resize_px], interpolation=InterpolationMode.BICUBIC)

        w, h = img.size
        if w < cfg.crop_px or h < cfg.crop_px:
            pad_w = max(0, cfg.crop_px - w)
            pad_h = max(0, cfg.crop_px - h)
            img = TF.pad(img, [pad_w // 2, pad_h // 2, pad_w - pad_w // 2, pad_h - pad_h // 2],
                         padding_mode="reflect")
            w, h = img.size
        if cfg.crop_mode == "center":
            img = TF.center_crop(img, [cfg.crop_px, cfg.crop_px])
        else:
            top = int(torch.randint(h - cfg.crop_px + 1, (1,), generator=self.rng).item())
            left = int(torch.randint(w - cfg.crop_px + 1, (1,), generator=self.rng).item())
            img = TF.crop(img, top, left, cfg.crop_px, cfg.crop_px)

        if cfg.hflip_p > 0 and self._rand() < cfg.hflip_p:
            img = TF.hflip(img)
        if cfg.vflip_p > 0 and self._rand() < cfg.vflip_p:
            img = TF.vflip(img)
        if cfg.trivial_augment_enabled:
            img = trivial_augment(img, self.rng)
        if cfg.jitter_brightness > 0:
            low = max(0.0, 1.0 - cfg.jitter_brightness)
            img = TF.adjust_brightness(img, low + (1.0 + cfg.jitter_brightness - low) * self._rand())
        if cfg.jitter_contrast > 0:
            low = max(0.0, 1.0 - cfg.jitter_contrast)
            img = TF.adjust_contrast(img, low + (1.0 + cfg.jitter_contrast - low) * self._rand())
        if cfg.affine_max_shear_deg > 0 or cfg.affine_max_translate > 0:
            shear = cfg.affine_max_shear_deg * (2.0 * self._rand() - 1.0)
            max_dx = cfg.affine_max_translate * cfg.crop_px
            tx = int(round(max_dx * (2.0 * self._rand() - 1.0)))
            ty = int(round(max_dx * (2.0 * self._rand() - 1.0)))
            img = TF.affine(img, angle=0.0, translate=[tx, ty], scale=1.0, shear=[shear, 0.0])
        if cfg.blur_p > 0 and self._rand() < cfg.blur_p:
            sigma = 0.1 + 1.9 * self._rand()
            img = TF.gaussian_blur(img, kernel_size=5, sigma=sigma)

        tensor = TF.normalize(TF.to_tensor(img), list(NORM_MEAN), list(NORM_STD))
        tensor = random_erase(tensor, cfg, self.rng)
        return tensor


class EvalTransform:
    """Deterministic inference-path transform: resize, center crop, normalize."""

    def __init__(self, resize_px: int = 341, crop_px: int = 300):
        self.resize_px = resize_px
        self.crop_px = crop_px

    def __call__(self, img: Image.Image | np.ndarray) -> torch.Tensor:
        img = _to_rgb(img)
        img = TF.resize(img, [self.resize_px, self.resize_px], interpolation=InterpolationMode.BICUBIC)
        img = TF.center_crop(img, [self.crop_px, self.crop_px])
        return TF.normalize(TF.to_tensor(img), list(NORM_MEAN), list(NORM_STD))


def build_train_transform(config: AugmentConfig | None = None, seed: int = 0) -> TrainTransform:
    return TrainTransform(config, seed)


def build_eval_transform() -> EvalTransform:
    return EvalTransform()
