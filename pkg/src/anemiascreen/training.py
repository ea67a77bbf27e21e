"""Two-phase fine-tuning driver and its numerical building blocks.

Phase 1 trains the fresh head on a frozen trunk for the warmup epochs;
phase 2 unfreezes the trunk under a 10x lower learning rate. Batches are
Mixup-blended with 50% probability, the loss is class-weighted
label-smoothing cross-entropy, gradients are clipped to a global norm of
5.0, and the learning rate follows a linear warmup into cosine annealing.
Checkpoints are driven purely by validation accuracy: the model is saved
only when accuracy improves, and early stopping counts epochs since the
last improvement. Validation loss never influences either decision.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn
from torch.utils.data import DataLoader, Dataset

from .augment import AugmentConfig, EvalTransform, TrainTransform
from .datapipe import ClassWeights, DatasetIndex, DatasetSplit, compute_class_weights
from .errors import ConfigurationError, TrainingDiverged
from .modeling import build_model, parameter_groups, save_checkpoint, set_backbone_trainable

log = logging.getLogger(__name__)


@dataclass
class MixupConfig:
    alpha: float = 0.2
    apply_prob: float = 0.5

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigurationError(f"mixup alpha must be positive, got {self.alpha}")
        if not 0.0 <= self.apply_prob <= 1.0:
            raise ConfigurationError(f"mixup apply_prob must be in [0, 1], got {self.apply_prob}")


@dataclass
class ScheduleConfig:
    eta_max: float = 1e-3
    eta_min: float = 1e-6
    warmup_epochs: int = 5
    total_epochs: int = 80

    def __post_init__(self):
        if not 0.0 <= self.eta_min < self.eta_max:
            raise ConfigurationError(f"need 0 <= eta_min < eta_max, got {self.eta_min}, {self.eta_max}")
        if not 0 <= self.warmup_epochs < self.total_epochs:
            raise ConfigurationError(
                f"need 0 <= warmup_epochs < total_epochs, got {self.warmup_epochs}, {self.total_epochs}")


@dataclass
class LossConfig:
    smoothing: float = 0.1
    class_weights: ClassWeights | None = None
    clip_max_norm: float = 5.0

    def __post_init__(self):
        if not 0.0 <= self.smoothing < 0.5:
            raise ConfigurationError(f"label smoothing must be in [0, 0.5), got {self.smoothing}")
        if self.clip_max_norm <= 0:
            raise ConfigurationError(f"clip_max_norm must be positive, got {self.clip_max_norm}")


@dataclass
class TrainProfile:
    name: str = "full"
    variant: str = "b3"
    total_epochs: int = 80
    device: str = "auto"

    FAST_EPOCH_CAP = 12

    def __post_init__(self):
        if self.name not in ("fast", "full"):
            raise ConfigurationError(f"profile must be 'fast' or 'full', got {self.name!r}")
        if self.name == "fast" and (self.variant != "b0" or self.total_epochs > self.FAST_EPOCH_CAP):
            raise ConfigurationError(
                f"fast profile requires variant b0 and <= {self.FAST_EPOCH_CAP} epochs")
        if self.name == "full" and self.variant != "b3":
            raise ConfigurationError("full profile requires variant b3")

    @classmethod
    def fast(cls, total_epochs: int = 12) -> "TrainProfile":
        return cls(name="fast", variant="b0", total_epochs=total_epochs)

    @classmethod
    def full(cls, total_epochs: int = 80) -> "TrainProfile":
        return cls(name="full", variant="b3", total_epochs=total_epochs)


@dataclass
class TrainerState:
    """Checkpoint/early-stopping bookkeeping across epochs."""

    epoch: int = 0
    best_val_acc: float = -1.0
    best_epoch: int = -1
    epochs_since_improve: int = 0
    patience: int = 15
    history: list[tuple] = field(default_factory=list)


def should_checkpoint(state: TrainerState, epoch_val_acc: float) -> tuple[bool, bool]:
    """Accuracy-first policy: save iff val accuracy strictly improved; stop on patience.

    Validation loss plays no role, by design: loss oscillations on noisy
    epochs must not suppress a genuine accuracy improvement.
    """
    save = epoch_val_acc > state.best_val_acc
    if save:
        state.best_val_acc = epoch_val_acc
        state.best_epoch = state.epoch
        state.epochs_since_improve = 0
    else:
        state.epochs_since_improve += 1
    stop = state.epochs_since_improve >= state.patience
    return save, stop


def lr_value(t: int, schedule: ScheduleConfig) -> float:
    """Learning rate at epoch ``t``: linear ramp for t < warmup, cosine decay after.

    The ramp starts at eta_max / warmup_epochs (no zero-LR dead epoch) and the
    cosine phase is re-indexed over the post-warmup span so that
    t = warmup -> eta_max, t = total -> eta_min.
    """
    w, total = schedule.warmup_epochs, schedule.total_epochs
    if t < 0:
        raise ConfigurationError(f"epoch index must be >= 0, got {t}")
    if t > total:
        log.warning("epoch %d beyond schedule end %d; clamping to eta_min", t, total)
        return schedule.eta_min
    if t < w:
        return schedule.eta_max * (t + 1) / w
    span = total - w
    cos = math.cos(math.pi * (t - w) / span)
    return schedule.eta_min + 0.5 * (schedule.eta_max - schedule.eta_min) * (1.0 + cos)


def smoothed_weighted_ce(logits: torch.Tensor, labels: torch.Tensor,
                         loss_config: LossConfig) -> torch.Tensor:
    """Label-smoothing cross-entropy with per-class inverse-frequency weights.

    The target distribution puts 1 - eps on the true class and eps/(K-1) on
    every other class. Each sample's loss is scaled by its true class weight
    and the batch reduces as mean(weight_i * loss_i), which preserves the
    unweighted scale in expectation because the weights average to 1 over the
    training distribution.
    """
    if logits.ndim != 2:
        raise ValueError(f"expected (batch, classes) logits, got shape {tuple(logits.shape)}")
    k = logits.shape[1]
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"label out of range for {k} classes")
    eps = loss_config.smoothing
    log_probs = torch.log_softmax(logits, dim=1)
    off = eps / (k - 1)
    target = torch.full_like(log_probs, off)
    target.scatter_(1, labels.view(-1, 1), 1.0 - eps)
    per_sample = -(target * log_probs).sum(dim=1)
    if loss_config.class_weights is not None:
        weights = torch.as_tensor(loss_config.class_weights.weights,
                                  dtype=logits.dtype, device=logits.device)
        per_sample = per_sample * weights[labels]
    return per_sample.mean()


def mixup_batch(inputs: torch.Tensor, labels: torch.Tensor, rng: np.random.Generator,
                config: MixupConfig) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, float]:
    """Blend the batch with a random permutation partner: lam*x_i + (1-lam)*x_j.

    Applied per batch with probability ``apply_prob``; otherwise (and for
    single-sample batches) the batch passes through with lam = 1.
    """
    n = inputs.shape[0]
    if n < 2:
        log.info("mixup skipped: batch of size %d", n)
        return inputs, labels, labels, 1.0
    if rng.random() >= config.apply_prob:
        return inputs, labels, labels, 1.0
    lam = float(rng.beta(config.alpha, config.alpha))
    perm = torch.as_tensor(rng.permutation(n), device=inputs.device)
    mixed = lam * inputs + (1.0 - lam) * inputs[perm]
    return mixed, labels, labels[perm], lam


def mixed_loss(logits: torch.Tensor, labels_i: torch.Tensor, labels_j: torch.Tensor,
               lam: float, loss_config: LossConfig) -> torch.Tensor:
    """lam-blend of the standard loss against both label sets."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lam}")
    if lam == 1.0:
        return smoothed_weighted_ce(logits, labels_i, loss_config)
    if lam == 0.0:
        return smoothed_weighted_ce(logits, labels_j, loss_config)
    return (lam * smoothed_weighted_ce(logits, labels_i, loss_config)
            + (1.0 - lam) * smoothed_weighted_ce(logits, labels_j, loss_config))


def clip_gradients(named_grads, max_norm: float = 5.0):
    """Scale gradients in place so their global L2 norm is at most ``max_norm``.

    ``named_grads`` is an iterable of (name, tensor) pairs or bare tensors.
    Non-finite gradients raise, naming the offender. Returns the pre-clip norm.
    """
    pairs = []
    for item in named_grads:
        name, grad = item if isinstance(item, tuple) else (f"param{len(pairs)}", item)
        if grad is None:
            continue
        if not torch.isfinite(grad).all():
            raise TrainingDiverged(f"non-finite gradient in {name!r}")
        pairs.append((name, grad))
    if not pairs:
        return 0.0
    total = math.sqrt(sum(float(g.detach().pow(2).sum()) for _, g in pairs))
    if total > max_norm:
        scale = max_norm / total
        for _, g in pairs:
            g.detach().mul_(scale)
    return total


@dataclass
class TrainConfig:
    """The complete training recipe, JSON round-trippable for the CLI."""

    profile: TrainProfile = field(default_factory=TrainProfile)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    mixup: MixupConfig = field(default_factory=MixupConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    head_pretrained: bool = False
    batch_size: int = 32
    weight_decay: float = 1e-4
    backbone_lr_factor: float = 0.1
    unfreeze_epoch: int | None = None  # None -> after the warmup epochs
    patience: int = 15
    adam_betas: tuple[float, float] = (0.9, 0.999)
    seed: int = 0

    KNOWN_KEYS = ("profile", "augment", "mixup", "schedule", "loss", "head_pretrained",
                  "batch_size", "weight_decay", "backbone_lr_factor", "unfreeze_epoch",
                  "patience", "adam_betas", "seed")

    def __post_init__(self):
        self.schedule.total_epochs = self.profile.total_epochs
        if not 0 <= self.schedule.warmup_epochs < self.schedule.total_epochs:
            raise ConfigurationError(
                f"warmup_epochs {self.schedule.warmup_epochs} must be < the profile's "
                f"total_epochs {self.schedule.total_epochs}")

    def to_dict(self) -> dict:
        doc = {
            "profile": asdict(self.profile),
            "augment": self.augment.to_dict(),
            "mixup": asdict(self.mixup),
            "schedule": asdict(self.schedule),
            "loss": {"smoothing": self.loss.smoothing, "clip_max_norm": self.loss.clip_max_norm},
            "head_pretrained": self.head_pretrained,
            "batch_size": self.batch_size,
            "weight_decay": self.weight_decay,
            "backbone_lr_factor": self.backbone_lr_factor,
            "unfreeze_epoch": self.unfreeze_epoch,
            "patience": self.patience,
            "adam_betas": list(self.adam_betas),
            "seed": self.seed,
        }
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        unknown = set(doc) - set(cls.KNOWN_KEYS)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict = {}
        if "profile" in doc:
            kwargs["profile"] = TrainProfile(**doc["profile"])
        if "augment" in doc:
            kwargs["augment"] = AugmentConfig.from_dict(doc["augment"])
        if "mixup" in doc:
            kwargs["mixup"] = MixupConfig(**doc["mixup"])
        if "schedule" in doc:
            kwargs["schedule"] = ScheduleConfig(**doc["schedule"])
        if "loss" in doc:
            loss_doc = dict(doc["loss"])
            loss_doc.pop("class_weights", None)  # recomputed from the train split
            kwargs["loss"] = LossConfig(**loss_doc)
        for key in ("head_pretrained", "batch_size", "weight_decay", "backbone_lr_factor",
                    "unfreeze_epoch", "patience", "seed"):
            if key in doc:
                kwargs[key] = doc[key]
        if "adam_betas" in doc:
            kwargs["adam_betas"] = tuple(doc["adam_betas"])
        return cls(**kwargs)


HISTORY_COLUMNS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc", "lr")


@dataclass
class TrainResult:
    checkpoint_path: Path
    state: TrainerState
    history: list[dict]
    class_weights: ClassWeights

    def write_history_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(HISTORY_COLUMNS)
            for row in self.history:
                writer.writerow([row["epoch"]] + [f"{row[c]:.6f}" for c in HISTORY_COLUMNS[1:]])
        return path


class _SplitDataset(Dataset):
    """Adapter from a DatasetIndex + id list to (tensor, label) pairs.

    Decoded pixels are cached; the corpora this trains on are small enough to
    hold in memory and the 1-CPU box cannot afford per-epoch re-decoding.
    """

    def __init__(self, index: DatasetIndex, ids: Sequence[str], transform):
        self.samples = [index.by_id(i) for i in ids]
        self.transform = transform
        self._pixel_cache: dict[int, np.ndarray] = {}

    def __len__(self):
        return len(self.samples)

    def __getitem__(self, i):
        pixels = self._pixel_cache.get(i)
        if pixels is None:
            pixels = self.samples[i].load_pixels()
            self._pixel_cache[i] = pixels
        return self.transform(pixels), self.samples[i].label


def _run_validation(network: nn.Module, loader: DataLoader, loss_config: LossConfig,
                    device: torch.device) -> tuple[float, float]:
    network.eval()
    total_loss, correct, count = 0.0, 0, 0
    with torch.no_grad():
        for inputs, labels in loader:
            inputs, labels = inputs.to(device), labels.to(device)
            logits = network(inputs)
            loss = smoothed_weighted_ce(logits, labels, loss_config)
            total_loss += float(loss) * labels.shape[0]
            correct += int((logits.argmax(dim=1) == labels).sum())
            count += labels.shape[0]
    network.train()
    return total_loss / count, correct / count


def train(profile: TrainProfile, config: TrainConfig, index: DatasetIndex,
          split: DatasetSplit, out_dir: str | Path) -> TrainResult:
    """Run the full two-phase fine-tuning loop and persist the best checkpoint."""
    if not split.train:
        raise ConfigurationError("train split is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    device = torch.device("cuda" if config.profile.device == "auto" and torch.cuda.is_available()
                          else "cpu" if config.profile.device == "auto" else config.profile.device)

    train_counts = np.zeros(len(index.class_names), dtype=np.int64)
    for sid in split.train:
        train_counts[index.by_id(sid).label] += 1
    class_weights = compute_class_weights(train_counts.tolist())
    loss_config = LossConfig(smoothing=config.loss.smoothing, class_weights=class_weights,
                             clip_max_norm=config.loss.clip_max_norm)

    train_ds = _SplitDataset(index, split.train, TrainTransform(config.augment, seed=config.seed))
    val_ds = _SplitDataset(index, split.val, EvalTransform(config.augment.resize_px, config.augment.crop_px))
    loader_rng = torch.Generator().manual_seed(config.seed)
    train_loader = DataLoader(train_ds, batch_size=config.batch_size, shuffle=True,
                              generator=loader_rng, num_workers=0)
    val_loader = DataLoader(val_ds, batch_size=config.batch_size, shuffle=False, num_workers=0)

    bundle = build_model(profile.variant, pretrained=config.head_pretrained)
    bundle.network.to(device)
    set_backbone_trainable(bundle, False)  # phase 1: head only
    groups = parameter_groups(bundle, config.schedule.eta_max, config.backbone_lr_factor)
    optimizer = torch.optim.AdamW(groups, betas=config.adam_betas, weight_decay=config.weight_decay)

    unfreeze_at = config.unfreeze_epoch if config.unfreeze_epoch is not None else config.schedule.warmup_epochs
    state = TrainerState(patience=config.patience)
    history: list[dict] = []
    checkpoint_path = out_dir / "best.pt"
    bundle.network.train()

    for epoch in range(config.schedule.total_epochs):
        state.epoch = epoch
        if epoch == unfreeze_at and not bundle.backbone_trainable:
            set_backbone_trainable(bundle, True)
            log.info("epoch %d: backbone unfrozen (differential lr x%.2g)",
                     epoch, config.backbone_lr_factor)
        eta = lr_value(epoch, config.schedule)
        for group in optimizer.param_groups:
            group["lr"] = eta * group["lr_scale"]

        running_loss, running_acc, seen = 0.0, 0.0, 0
        for inputs, labels in train_loader:
            inputs, labels = inputs.to(device), labels.to(device)
            mixed, y_i, y_j, lam = mixup_batch(inputs, labels, rng, config.mixup)
            logits = bundle.network(mixed)
            loss = mixed_loss(logits, y_i, y_j, lam, loss_config)
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            clip_gradients(((n, p.grad) for n, p in bundle.network.named_parameters()),
                           loss_config.clip_max_norm)
            optimizer.step()

            n = labels.shape[0]
            pred = logits.argmax(dim=1)
            acc = (lam * float((pred == y_i).sum()) + (1.0 - lam) * float((pred == y_j).sum())) / n
            running_loss += float(loss.detach()) * n
            running_acc += acc * n
            seen += n

        val_loss, val_acc = _run_validation(bundle.network, val_loader, loss_config, device)
        save, stop = should_checkpoint(state, val_acc)
        if save:
            bundle.version = f"{bundle.version.split('-e')[0]}-e{epoch}"
            save_checkpoint(bundle, checkpoint_path, val_acc=val_acc, epoch=epoch,
                            extra={"profile": profile.name, "seed": config.seed})
            log.info("epoch %d: new best val_acc %.4f, checkpoint saved", epoch, val_acc)
        row = {
            "epoch": epoch,
            "train_loss": running_loss / seen,
            "train_acc": running_acc / seen,
            "val_loss": val_loss,
            "val_acc": val_acc,
            "lr": eta,
        }
        history.append(row)
        state.history.append(tuple(row[c] for c in HISTORY_COLUMNS))
        if stop:
            log.info("early stop at epoch %d: no val-accuracy improvement in %d epochs",
                     epoch, state.patience)
            break

    return TrainResult(checkpoint_path=checkpoint_path, state=state, history=history,
                       class_weights=class_weights)
