"""Classifier construction: pretrained convolutional trunk + redesigned head.

The stock single-layer classifier of the compound-scaled backbone is replaced
with a three-layer head:

    Linear(in, 512) + BatchNorm + GELU + Dropout(0.45)
    Linear(512, 256) + BatchNorm + GELU + Dropout(0.35)
    Linear(256, num_classes)

The trunk can be frozen/unfrozen as a unit for two-phase fine-tuning, and
``parameter_groups`` splits trainable parameters into head/backbone groups
with a differential learning rate.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import torch
from torch import nn
from torchvision import models

from .errors import CheckpointError, ConfigurationError, PretrainedWeightsUnavailable

VARIANTS = ("b0", "b3")


@dataclass
class HeadConfig:
    in_dim: int | None = None  # None -> taken from the backbone's pooled width
    hidden_dims: tuple[int, int] = (512, 256)
    dropout_rates: tuple[float, float] = (0.45, 0.35)
    num_classes: int = 2

    def __post_init__(self):
        if len(self.hidden_dims) != 2 or len(self.dropout_rates) != 2:
            raise ConfigurationError("head expects exactly two hidden layers and two dropout rates")
        if not all(0.0 < r < 1.0 for r in self.dropout_rates):
            raise ConfigurationError(f"dropout rates must lie in (0, 1), got {self.dropout_rates}")
        if self.num_classes < 2:
            raise ConfigurationError("num_classes must be >= 2")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "HeadConfig":
        doc = dict(doc)
        for key in ("hidden_dims", "dropout_rates"):
            if key in doc:
                doc[key] = tuple(doc[key])
        return cls(**doc)


def _init_linear(layer: nn.Linear) -> None:
    # fresh head on a pretrained trunk: truncated normal scaled by fan-in, zero bias
    std = 1.0 / math.sqrt(layer.in_features)
    nn.init.trunc_normal_(layer.weight, std=std, a=-2 * std, b=2 * std)
    nn.init.zeros_(layer.bias)


def build_head(in_dim: int, config: HeadConfig) -> nn.Sequential:
    h1, h2 = config.hidden_dims
    d1, d2 = config.dropout_rates
    head = nn.Sequential(
        nn.Linear(in_dim, h1),
        nn.BatchNorm1d(h1),
        nn.GELU(),
        nn.Dropout(d1),
        nn.Linear(h1, h2),
        nn.BatchNorm1d(h2),
        nn.GELU(),
        nn.Dropout(d2),
        nn.Linear(h2, config.num_classes),
    )
    for layer in head:
        if isinstance(layer, nn.Linear):
            _init_linear(layer)
    return head


def head_parameter_count(in_dim: int, config: HeadConfig) -> int:
    """Closed-form trainable-parameter count of the head (BatchNorm = weight + bias)."""
    h1, h2 = config.hidden_dims
    k = config.num_classes
    return (in_dim * h1 + h1) + 2 * h1 + (h1 * h2 + h2) + 2 * h2 + (h2 * k + k)


@dataclass
class ModelBundle:
    """A backbone + head pair with trainability metadata."""

    network: nn.Module
    variant: str
    head_config: HeadConfig
    backbone_trainable: bool
    version: str

    @property
    def backbone(self) -> nn.Module:
        return self.network.features

    @property
    def head(self) -> nn.Module:
        return self.network.classifier

    def backbone_parameters(self):
        return self.backbone.parameters()

    def head_parameters(self):
        return self.head.parameters()


def config_hash(variant: str, head_config: HeadConfig) -> str:
    doc = json.dumps({"variant": variant, "head": head_config.to_dict()}, sort_keys=True)
    return hashlib.sha256(doc.encode()).hexdigest()[:8]


def build_model(variant: str = "b3", head_config: HeadConfig | None = None,
                pretrained: bool = False) -> ModelBundle:
    """Construct the classifier, optionally loading pretrained trunk weights.

    If pretrained weights are requested but cannot be obtained (no cache, no
    network), this raises instead of silently falling back to random init.
    """
    variant = variant.lower()
    if variant not in VARIANTS:
        raise ConfigurationError(f"variant must be one of {VARIANTS}, got {variant!r}")
    head_config = head_config or HeadConfig()

    factory = models.efficientnet_b3 if variant == "b3" else models.efficientnet_b0
    weights = None
    if pretrained:
        weights_enum = (models.EfficientNet_B3_Weights if variant == "b3"
                        else models.EfficientNet_B0_Weights)
        weights = weights_enum.IMAGENET1K_V1
    try:
        network = factory(weights=weights)
    except Exception as exc:
        if pretrained:
            raise PretrainedWeightsUnavailable(
                f"pretrained weights for {variant} could not be loaded: {exc}"
            ) from exc
        raise

    in_dim = head_config.in_dim or network.classifier[-1].in_features
    head_config.in_dim = in_dim
    network.classifier = build_head(in_dim, head_config)

    version = f"{config_hash(variant, head_config)}-e0"
    return ModelBundle(network=network, variant=variant, head_config=head_config,
                       backbone_trainable=True, version=version)


def set_backbone_trainable(bundle: ModelBundle, flag: bool) -> ModelBundle:
    """Enable/disable gradients for every backbone parameter; the head stays trainable."""
    for p in bundle.backbone_parameters():
        p.requires_grad_(flag)
    for p in bundle.head_parameters():
        p.requires_grad_(True)
    bundle.backbone_trainable = flag
    return bundle


def parameter_groups(bundle: ModelBundle, base_lr: float, backbone_factor: float = 0.1) -> list[dict]:
    """Optimizer param groups: head at base_lr, backbone at base_lr * backbone_factor.

    Every trainable parameter lands in exactly one group. ``lr_scale`` is kept
    on each group so a scheduler can reapply the differential factor.
    """
    if base_lr <= 0:
        raise ConfigurationError(f"base_lr must be positive, got {base_lr}")
    if backbone_factor <= 0:
        raise ConfigurationError(f"backbone_factor must be positive, got {backbone_factor}")
    head_ids = {id(p) for p in bundle.head_parameters()}
    head, backbone = [], []
    for p in bundle.network.parameters():
        (head if id(p) in head_ids else backbone).append(p)
    return [
        {"name": "head", "params": head, "lr": base_lr, "lr_scale": 1.0},
        {"name": "backbone", "params": backbone, "lr": base_lr * backbone_factor,
         "lr_scale": backbone_factor},
    ]


def save_checkpoint(bundle: ModelBundle, path: str | Path, *, val_acc: float,
                    epoch: int, extra: dict | None = None) -> Path:
    """Write weights plus a JSON sidecar describing how to rebuild the model."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(bundle.network.state_dict(), path)
    sidecar = {
        "variant": bundle.variant,
        "head_config": bundle.head_config.to_dict(),
        "val_acc": float(val_acc),
        "epoch": int(epoch),
        "config_hash": config_hash(bundle.variant, bundle.head_config),
    }
    if extra:
        sidecar.update(extra)
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))
    return path


def load_checkpoint(path: str | Path) -> tuple[ModelBundle, dict]:
    """Rebuild a model from a checkpoint + sidecar. Returns (bundle, sidecar)."""
    path = Path(path)
    sidecar_path = path.with_suffix(".json")
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    if not sidecar_path.is_file():
        raise CheckpointError(f"checkpoint sidecar not found: {sidecar_path}")
    sidecar = json.loads(sidecar_path.read_text())
    bundle = build_model(sidecar["variant"], HeadConfig.from_dict(sidecar["head_config"]),
                         pretrained=False)
    state = torch.load(path, map_location="cpu", weights_only=True)
    try:
        bundle.network.load_state_dict(state)
    except RuntimeError as exc:
        raise CheckpointError(f"checkpoint does not match its sidecar config: {exc}") from exc
    bundle.version = f"{sidecar['config_hash']}-e{sidecar['epoch']}"
    bundle.network.eval()
    return bundle, sidecar
