"""Evaluation surface: confusion matrix, derived rates, ROC-AUC, file export.

The anemic class (index 0) is the positive class for sensitivity: a missed
anemia case (false negative) is the costly error, so recall on that class is
the safety-critical number. ``roc_auc`` itself is orientation-agnostic and
takes scores for whichever class the caller marks with label 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import UndefinedMetricError

DEFAULT_CLASS_NAMES = ("anemic", "non_anemic")


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows = actual, cols = predicted
    class_names: tuple[str, ...]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def normalized(self) -> np.ndarray:
        row_sums = self.counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(row_sums > 0, self.counts / row_sums, 0.0)
        return out


@dataclass
class ClassReport:
    precision: float
    recall: float
    f1: float
    support: int
    zero_support: bool = False


@dataclass
class EvalMetrics:
    matrix: ConfusionMatrix
    accuracy: float
    sensitivity: float
    specificity: float
    per_class: dict[str, ClassReport]
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    auc_roc: float | None = None
    roc_points: list[tuple[float, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        doc = {
            "accuracy": round(self.accuracy, 6),
            "sensitivity": round(self.sensitivity, 6),
            "specificity": round(self.specificity, 6),
            "weighted_precision": round(self.weighted_precision, 6),
            "weighted_recall": round(self.weighted_recall, 6),
            "weighted_f1": round(self.weighted_f1, 6),
            "auc_roc": None if self.auc_roc is None else round(self.auc_roc, 6),
            "confusion": self.matrix.counts.tolist(),
            "class_names": list(self.matrix.class_names),
            "per_class": {
                name: {
                    "precision": round(r.precision, 6),
                    "recall": round(r.recall, 6),
                    "f1": round(r.f1, 6),
                    "support": r.support,
                    "zero_support": r.zero_support,
                }
                for name, r in self.per_class.items()
            },
        }
        return doc


def confusion(predicted: Sequence[int], actual: Sequence[int], k: int,
              class_names: Sequence[str] | None = None) -> ConfusionMatrix:
    """counts[a][p] = number of samples with actual class a predicted as p."""
    predicted = np.asarray(predicted, dtype=np.int64)
    actual = np.asarray(actual, dtype=np.int64)
    if predicted.shape != actual.shape:
        raise ValueError(f"length mismatch: {predicted.shape} predicted vs {actual.shape} actual")
    if predicted.size and (predicted.min() < 0 or predicted.max() >= k
                           or actual.min() < 0 or actual.max() >= k):
        raise ValueError(f"labels out of range for {k} classes")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (actual, predicted), 1)
    names = tuple(class_names) if class_names else (
        DEFAULT_CLASS_NAMES if k == 2 else tuple(f"class_{i}" for i in range(k)))
    return ConfusionMatrix(counts=counts, class_names=names)


def derive_metrics(matrix: ConfusionMatrix) -> EvalMetrics:
    """Accuracy, sensitivity/specificity (2-class), per-class P/R/F1 and weighted averages.

    A class with zero support gets recall 0 and a ``zero_support`` flag rather
    than NaN.
    """
    counts = matrix.counts
    k = counts.shape[0]
    total = counts.sum()
    if total == 0:
        raise UndefinedMetricError("empty confusion matrix")
    accuracy = float(np.trace(counts) / total)

    per_class: dict[str, ClassReport] = {}
    supports = counts.sum(axis=1)
    predicted_totals = counts.sum(axis=0)
    for c in range(k):
        tp = counts[c, c]
        support = int(supports[c])
        precision = float(tp / predicted_totals[c]) if predicted_totals[c] > 0 else 0.0
        recall = float(tp / support) if support > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        per_class[matrix.class_names[c]] = ClassReport(
            precision=precision, recall=recall, f1=f1, support=support,
            zero_support=support == 0)

    weights = supports / total
    reports = list(per_class.values())
    weighted_precision = float(sum(w * r.precision for w, r in zip(weights, reports)))
    weighted_recall = float(sum(w * r.recall for w, r in zip(weights, reports)))
    weighted_f1 = float(sum(w * r.f1 for w, r in zip(weights, reports)))

    if k == 2:
        # anemic (class 0) is positive: sensitivity = its recall, specificity = the other's
        sensitivity = reports[0].recall
        specificity = reports[1].recall
    else:
        sensitivity = reports[0].recall
        specificity = float(np.mean([r.recall for r in reports[1:]])) if k > 1 else 0.0

    return EvalMetrics(
        matrix=matrix, accuracy=accuracy, sensitivity=sensitivity, specificity=specificity,
        per_class=per_class, weighted_precision=weighted_precision,
        weighted_recall=weighted_recall, weighted_f1=weighted_f1)


def roc_curve_points(scores: Sequence[float], labels: Sequence[int]) -> list[tuple[float, float]]:
    """(fpr, tpr) points of the ROC curve, one per distinct score threshold.

    ``labels`` mark the positive class with 1; ``scores`` are the predicted
    positive-class probabilities. Tied scores collapse into one threshold so
    the curve steps diagonally through ties.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have equal length")
    pos = int((labels == 1).sum())
    neg = int((labels == 0).sum())
    if pos == 0 or neg == 0:
        raise UndefinedMetricError("ROC needs at least one positive and one negative sample")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    n = len(scores)
    while i < n:
        j = i
        while j < n and sorted_scores[j] == sorted_scores[i]:
            tp += int(sorted_labels[j] == 1)
            fp += int(sorted_labels[j] == 0)
            j += 1
        points.append((fp / neg, tp / pos))
        i = j
    return points


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Area under the ROC curve by trapezoidal integration over the threshold sweep.

    Equals the Mann-Whitney concordant-pair statistic with half credit for
    tied scores.
    """
    points = roc_curve_points(scores, labels)
    fpr = np.array([p[0] for p in points])
    tpr = np.array([p[1] for p in points])
    return float(np.trapezoid(tpr, fpr))


def export_report(metrics: EvalMetrics, history: Sequence[dict], out_dir: str | Path) -> dict[str, Path]:
    """Write metrics JSON, confusion CSV, ROC-points CSV, and history CSV."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory not writable: {out_dir}") from exc

    paths = {
        "metrics": out_dir / "metrics.json",
        "confusion": out_dir / "confusion.csv",
        "roc": out_dir / "roc_points.csv",
        "history": out_dir / "history.csv",
    }
    paths["metrics"].write_text(json.dumps(metrics.to_dict(), indent=2))

    names = metrics.matrix.class_names
    lines = ["actual\\predicted," + ",".join(names)]
    for i, name in enumerate(names):
        lines.append(name + "," + ",".join(str(int(v)) for v in metrics.matrix.counts[i]))
    paths["confusion"].write_text("\n".join(lines) + "\n")

    roc_lines = ["fpr,tpr"]
    for fpr, tpr in metrics.roc_points:
        roc_lines.append(f"{fpr:.6f},{tpr:.6f}")
    paths["roc"].write_text("\n".join(roc_lines) + "\n")

    history_lines = ["epoch,train_loss,train_acc,val_loss,val_acc,lr"]
    for row in history:
        history_lines.append(
            f"{row['epoch']},{row['train_loss']:.6f},{row['train_acc']:.6f},"
            f"{row['val_loss']:.6f},{row['val_acc']:.6f},{row['lr']:.6f}")
    paths["history"].write_text("\n".join(history_lines) + "\n")
    return paths
