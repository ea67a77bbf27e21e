"""Operator command line: train, eval, export, serve, migrate, report.

The container entrypoint runs `anemiascreen migrate` followed by
`anemiascreen serve`; `migrate` exits nonzero when the backend is
unreachable, which aborts startup.
"""

from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click

from . import __version__
from .datapipe import load_dataset, stratified_split
from .errors import ConfigurationError
from .metrics import confusion, derive_metrics, export_report, roc_auc, roc_curve_points
from .training import TrainConfig, train

log = logging.getLogger(__name__)


def _echo_config(doc: dict) -> None:
    """Print the effective configuration with secrets redacted."""
    redacted = dict(doc)
    for key in ("database_url", "DATABASE_URL"):
        if redacted.get(key):
            redacted[key] = "***"
    click.echo("effective config: " + json.dumps(redacted, sort_keys=True, default=str))


def _apply_overrides(doc: dict, overrides: tuple[str, ...]) -> dict:
    for item in overrides:
        if "=" not in item:
            raise click.UsageError(f"override must look like key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        target = doc
        parts = key.split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
        target[parts[-1]] = value
    return doc


def _load_train_config(config_path: str | None, profile: str | None, seed: int | None,
                       overrides: tuple[str, ...]) -> TrainConfig:
    doc = {}
    if config_path:
        doc = json.loads(Path(config_path).read_text())
    if profile:
        profile_doc = doc.setdefault("profile", {})
        profile_doc["name"] = profile
        profile_doc.setdefault("variant", "b0" if profile == "fast" else "b3")
        if "total_epochs" not in profile_doc:
            profile_doc["total_epochs"] = 12 if profile == "fast" else 80
    if seed is not None:
        doc["seed"] = seed
    doc = _apply_overrides(doc, overrides)
    try:
        return TrainConfig.from_dict(doc)
    except (ConfigurationError, TypeError) as exc:
        raise click.UsageError(str(exc))


def _resolve_data_root(data_root: str | None) -> Path:
    root = data_root or os.environ.get("ANEMIA_DATA_ROOT")
    if not root:
        raise click.UsageError("pass --data-root or set ANEMIA_DATA_ROOT")
    return Path(root)


@click.group()
@click.version_option(__version__)
def main():
    """Anemia screening: training, evaluation, and the inference service."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")


@main.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--profile", type=click.Choice(["fast", "full"]))
@click.option("--data-root", type=click.Path(file_okay=False))
@click.option("--out-dir", type=click.Path(file_okay=False), default="runs/latest")
@click.option("--seed", type=int, default=None)
@click.option("--set", "overrides", multiple=True, help="Dotted config override, e.g. schedule.eta_max=0.002")
def train_cmd(config_path, profile, data_root, out_dir, seed, overrides):
    """Run two-phase fine-tuning; writes checkpoint, history CSV, split manifest."""
    config = _load_train_config(config_path, profile, seed, overrides)
    _echo_config(config.to_dict())
    root = _resolve_data_root(data_root)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    index = load_dataset(root)
    split = stratified_split(index, seed=config.seed)
    (out / "split.json").write_text(split.to_json())

    result = train(config.profile, config, index, split, out)
    result.write_history_csv(out / "history.csv")
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2))
    click.echo(f"best checkpoint: {result.checkpoint_path} "
               f"(val_acc {result.state.best_val_acc:.4f} @ epoch {result.state.best_epoch})")


def _eval_from_predictions(predictions_path: Path, out: Path) -> None:
    doc = json.loads(predictions_path.read_text())
    actual, predicted = doc["actual"], doc["predicted"]
    matrix = confusion(predicted, actual, k=2)
    metrics = derive_metrics(matrix)
    if doc.get("scores"):
        positives = [1 if a == 0 else 0 for a in actual]  # anemic is the positive class
        metrics.auc_roc = roc_auc(doc["scores"], positives)
        metrics.roc_points = roc_curve_points(doc["scores"], positives)
    paths = export_report(metrics, doc.get("history", []), out)
    click.echo(f"metrics written: {paths['metrics']}")
    click.echo(f"sensitivity {metrics.sensitivity:.4f}  specificity {metrics.specificity:.4f}"
               + (f"  auc {metrics.auc_roc:.4f}" if metrics.auc_roc is not None else ""))


def _eval_from_checkpoint(checkpoint: Path, data_root: Path, seed: int, out: Path) -> None:
    import torch

    from .augment import EvalTransform
    from .modeling import load_checkpoint

    bundle, _ = load_checkpoint(checkpoint)
    index = load_dataset(data_root)
    split = stratified_split(index, seed=seed)
    transform = EvalTransform()

    actual, predicted, scores = [], [], []
    with torch.inference_mode():
        batch, labels = [], []
        test_samples = [index.by_id(i) for i in split.test]
        for pos, sample in enumerate(test_samples):
            batch.append(transform(sample.load_pixels()))
            labels.append(sample.label)
            if len(batch) == 32 or pos == len(test_samples) - 1:
                probs = torch.softmax(bundle.network(torch.stack(batch)), dim=1)
                predicted.extend(probs.argmax(dim=1).tolist())
                scores.extend(probs[:, 0].tolist())  # P(anemic)
                actual.extend(labels)
                batch, labels = [], []

    matrix = confusion(predicted, actual, k=2, class_names=index.class_names)
    metrics = derive_metrics(matrix)
    positives = [1 if a == 0 else 0 for a in actual]
    if any(positives) and not all(positives):
        metrics.auc_roc = roc_auc(scores, positives)
        metrics.roc_points = roc_curve_points(scores, positives)
    paths = export_report(metrics, [], out)
    click.echo(f"metrics written: {paths['metrics']}")
    click.echo(f"accuracy {metrics.accuracy:.4f}  sensitivity {metrics.sensitivity:.4f}  "
               f"specificity {metrics.specificity:.4f}")


@main.command("eval")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False))
@click.option("--data-root", type=click.Path(file_okay=False))
@click.option("--predictions", type=click.Path(exists=True, dir_okay=False),
              help="JSON file {actual, predicted, scores?} to score instead of running a model")
@click.option("--out-dir", type=click.Path(file_okay=False), default="eval_out")
@click.option("--seed", type=int, default=0)
def eval_cmd(checkpoint, data_root, predictions, out_dir, seed):
    """Compute the metrics surface from a checkpoint + test split, or from stored predictions."""
    out = Path(out_dir)
    if predictions:
        _eval_from_predictions(Path(predictions), out)
    elif checkpoint:
        _eval_from_checkpoint(Path(checkpoint), _resolve_data_root(data_root), seed, out)
    else:
        raise click.UsageError(
            "pass either --predictions or --checkpoint with --data-root/ANEMIA_DATA_ROOT")


@main.command("export")
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default="export")
def export_cmd(checkpoint, out_dir):
    """Produce the inference-only artifact (weights + sidecar) from a training checkpoint."""
    import shutil

    from .modeling import load_checkpoint

    load_checkpoint(checkpoint)  # validates weights against the sidecar
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    src = Path(checkpoint)
    shutil.copy2(src, out / "model.pt")
    shutil.copy2(src.with_suffix(".json"), out / "model.json")
    click.echo(f"inference artifact: {out / 'model.pt'}")


@main.command("migrate")
@click.option("--max-wait", type=float, default=30.0, help="Seconds to wait for the backend")
def migrate_cmd(max_wait):
    """Create missing tables; idempotent. Exits nonzero if the backend is unreachable."""
    from .persistence import make_engine, migrate, select_backend

    url, kind = select_backend()
    _echo_config({"backend_kind": kind.value, "DATABASE_URL": os.environ.get("DATABASE_URL")})
    engine = make_engine(url)
    report = migrate(engine, kind, max_wait_seconds=max_wait)
    click.echo(f"migration applied: backend={report.backend_kind.value} reachable={report.reachable}")


@main.command("serve")
@click.option("--checkpoint", type=click.Path(dir_okay=False))
@click.option("--port", type=int, default=None)
@click.option("--host", default="0.0.0.0")
def serve_cmd(checkpoint, port, host):
    """Start the HTTP service (runs an inline migration first)."""
    from .service import ServiceSettings, run_server

    settings = ServiceSettings.from_env()
    if checkpoint:
        settings.checkpoint = Path(checkpoint)
    port = port if port is not None else int(os.environ.get("PORT", "8000"))
    _echo_config({
        "checkpoint": settings.checkpoint, "port": port,
        "DATABASE_URL": os.environ.get("DATABASE_URL"),
        "ANEMIA_DATA_DIR": str(settings.data_dir),
    })
    run_server(settings, host=host, port=port)


@main.command("report")
@click.option("--screening-id", type=int, required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def report_cmd(screening_id, out_path):
    """Render one screening's PDF report to a file."""
    from .persistence import Store, data_dir, make_engine, migrate, select_backend
    from .report import render_report

    url, kind = select_backend()
    engine = make_engine(url)
    migrate(engine, kind)
    store = Store(engine)
    screening = store.get_screening(screening_id)
    if screening is None:
        raise click.ClickException(f"no screening with id {screening_id}")
    patient = store.get_patient(screening.patient_id)
    image_path = data_dir() / "images" / screening.image_ref
    pdf = render_report(patient, screening, image_path if image_path.is_file() else None)
    Path(out_path).write_bytes(pdf)
    click.echo(f"report written: {out_path}")


def entry():
    try:
        main(standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        sys.exit(2)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except click.exceptions.Abort:
        sys.exit(130)
    except Exception as exc:  # runtime failure contract: exit 1 with a diagnostic
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    entry()
