import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anemiascreen.errors import UndefinedMetricError
from anemiascreen.metrics import (
    ConfusionMatrix, confusion, derive_metrics, export_report, roc_auc, roc_curve_points,
)


def pair_counting_auc(scores, labels):
    """Independent oracle: concordant-pair fraction with half credit for ties."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


# ---------------------------------------------------------------- confusion


def test_confusion_perfect_is_diagonal():
    m = confusion([0, 1, 0, 1], [0, 1, 0, 1], k=2)
    assert np.array_equal(m.counts, [[2, 0], [0, 2]])


def test_confusion_hand_count():
    m = confusion(predicted=[0, 1, 1, 1], actual=[0, 0, 1, 1], k=2)
    assert np.array_equal(m.counts, [[1, 1], [0, 2]])


def test_confusion_paper_fixture_normalized():
    m = ConfusionMatrix(counts=np.array([[96, 4], [5, 95]]), class_names=("anemic", "non_anemic"))
    assert np.allclose(m.normalized(), [[0.96, 0.04], [0.05, 0.95]])


def test_confusion_rejects_bad_input():
    with pytest.raises(ValueError):
        confusion([0, 1], [0], k=2)
    with pytest.raises(ValueError):
        confusion([0, 2], [0, 1], k=2)


# ---------------------------------------------------------------- derived metrics


def test_paper_fixture_sensitivity_specificity():
    m = ConfusionMatrix(counts=np.array([[96, 4], [5, 95]]), class_names=("anemic", "non_anemic"))
    metrics = derive_metrics(m)
    assert metrics.sensitivity == 0.96
    assert metrics.specificity == 0.95
    assert metrics.accuracy == pytest.approx(191 / 200)


def test_paper_fixture_per_class_table():
    # precision/recall near (0.95, 0.96) anemic and (0.96, 0.95) non-anemic;
    # weighted averages must equal the support-weighted means by construction
    m = ConfusionMatrix(counts=np.array([[96, 4], [5, 95]]), class_names=("anemic", "non_anemic"))
    metrics = derive_metrics(m)
    anemic = metrics.per_class["anemic"]
    healthy = metrics.per_class["non_anemic"]
    assert anemic.precision == pytest.approx(96 / 101, abs=1e-9)
    assert anemic.recall == 0.96
    assert healthy.recall == 0.95
    support_weighted_f1 = (anemic.support * anemic.f1 + healthy.support * healthy.f1) / 200
    assert metrics.weighted_f1 == pytest.approx(support_weighted_f1, abs=1e-9)
    assert 0.94 <= metrics.weighted_f1 <= 0.97


def test_diagonal_matrix_all_ones():
    m = ConfusionMatrix(counts=np.diag([30, 20]), class_names=("anemic", "non_anemic"))
    metrics = derive_metrics(m)
    assert metrics.accuracy == 1.0
    assert metrics.sensitivity == 1.0
    assert metrics.specificity == 1.0
    assert metrics.weighted_f1 == 1.0


def test_zero_support_class_flagged():
    m = ConfusionMatrix(counts=np.array([[10, 0], [0, 0]]), class_names=("anemic", "non_anemic"))
    metrics = derive_metrics(m)
    assert metrics.per_class["non_anemic"].zero_support
    assert metrics.per_class["non_anemic"].recall == 0.0


@settings(max_examples=80, deadline=None)
@given(counts=st.lists(st.integers(min_value=0, max_value=200), min_size=4, max_size=4))
def test_weighted_averages_recomputed(counts):
    mat = np.array(counts).reshape(2, 2)
    if mat.sum() == 0:
        return
    m = ConfusionMatrix(counts=mat, class_names=("anemic", "non_anemic"))
    metrics = derive_metrics(m)
    supports = mat.sum(axis=1)
    reports = [metrics.per_class["anemic"], metrics.per_class["non_anemic"]]
    expected = sum(s * r.f1 for s, r in zip(supports, reports)) / mat.sum()
    assert metrics.weighted_f1 == pytest.approx(expected, abs=1e-9)
    for value in (metrics.accuracy, metrics.sensitivity, metrics.specificity,
                  metrics.weighted_precision, metrics.weighted_recall, metrics.weighted_f1):
        assert 0.0 <= value <= 1.0


# ---------------------------------------------------------------- AUC


def test_auc_perfect_separation():
    assert roc_auc([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0]) == 1.0


def test_auc_three_of_four_pairs():
    # pairs: (.9,.6)+ (.9,.1)+ (.4,.6)- (.4,.1)+ -> 3/4
    assert roc_auc([0.9, 0.4, 0.6, 0.1], [1, 1, 0, 0]) == pytest.approx(0.75, abs=1e-12)


def test_auc_single_class_rejected():
    with pytest.raises(UndefinedMetricError):
        roc_auc([0.3, 0.6], [1, 1])


def test_auc_ties_get_half_credit():
    scores = [0.5, 0.5, 0.5, 0.5]
    assert roc_auc(scores, [1, 0, 1, 0]) == pytest.approx(0.5, abs=1e-12)


def test_auc_shuffled_labels_null_distribution():
    rng = np.random.default_rng(0)
    scores = rng.uniform(size=30)
    aucs = []
    for _ in range(10_000):
        labels = np.zeros(30, dtype=int)
        labels[rng.choice(30, size=15, replace=False)] = 1
        aucs.append(roc_auc(scores, labels))
    assert abs(np.mean(aucs) - 0.5) < 0.02


@settings(max_examples=200, deadline=None)
@given(
    n=st.integers(min_value=2, max_value=50),
    seed=st.integers(min_value=0, max_value=10_000),
    ties=st.booleans(),
)
def test_auc_equals_pair_counting(n, seed, ties):
    rng = np.random.default_rng(seed)
    scores = rng.integers(0, 5, size=n) / 4.0 if ties else rng.uniform(size=n)
    labels = rng.integers(0, 2, size=n)
    if labels.sum() in (0, n):
        labels[0] = 1 - labels[0]
    assert roc_auc(scores, labels) == pytest.approx(pair_counting_auc(scores, labels), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10_000))
def test_auc_monotone_transform_invariant(seed):
    rng = np.random.default_rng(seed)
    scores = rng.uniform(size=25)
    labels = rng.integers(0, 2, size=25)
    if labels.sum() in (0, 25):
        labels[0] = 1 - labels[0]
    base = roc_auc(scores, labels)
    for transform in (lambda s: 3 * s + 1, np.exp, lambda s: s ** 3):
        assert roc_auc(transform(scores), labels) == pytest.approx(base, abs=1e-12)


def test_auc_agrees_with_sklearn():
    from sklearn.metrics import roc_auc_score

    rng = np.random.default_rng(5)
    for _ in range(50):
        scores = rng.uniform(size=40)
        labels = rng.integers(0, 2, size=40)
        if labels.sum() in (0, 40):
            labels[0] = 1 - labels[0]
        assert roc_auc(scores, labels) == pytest.approx(roc_auc_score(labels, scores), abs=1e-12)


def test_roc_points_anchor_corners():
    points = roc_curve_points([0.9, 0.4, 0.6, 0.1], [1, 1, 0, 0])
    assert points[0] == (0.0, 0.0)
    assert points[-1] == (1.0, 1.0)


# ---------------------------------------------------------------- export


def test_export_report_roundtrip(tmp_path):
    m = confusion([0, 0, 1, 1, 1], [0, 0, 0, 1, 1], k=2)
    metrics = derive_metrics(m)
    metrics.auc_roc = roc_auc([0.9, 0.8, 0.6, 0.2, 0.1], [1, 1, 1, 0, 0])
    metrics.roc_points = roc_curve_points([0.9, 0.8, 0.6, 0.2, 0.1], [1, 1, 1, 0, 0])
    history = [
        {"epoch": 0, "train_loss": 0.9, "train_acc": 0.5, "val_loss": 0.8, "val_acc": 0.6, "lr": 1e-4},
        {"epoch": 1, "train_loss": 0.7, "train_acc": 0.7, "val_loss": 0.7, "val_acc": 0.7, "lr": 2e-4},
    ]
    paths = export_report(metrics, history, tmp_path / "out")
    assert all(p.is_file() for p in paths.values())

    doc = json.loads(paths["metrics"].read_text())
    reread = ConfusionMatrix(counts=np.array(doc["confusion"]), class_names=tuple(doc["class_names"]))
    rederived = derive_metrics(reread)
    # counts round-trip losslessly: re-derivation reproduces the originals exactly
    assert rederived.sensitivity == pytest.approx(metrics.sensitivity, abs=1e-9)
    assert rederived.accuracy == pytest.approx(metrics.accuracy, abs=1e-9)
    assert rederived.weighted_f1 == pytest.approx(metrics.weighted_f1, abs=1e-9)
    # stored floats carry 6-decimal formatting
    assert doc["sensitivity"] == pytest.approx(metrics.sensitivity, abs=5e-7)
    assert doc["accuracy"] == pytest.approx(metrics.accuracy, abs=5e-7)

    history_lines = paths["history"].read_text().strip().splitlines()
    assert history_lines[0] == "epoch,train_loss,train_acc,val_loss,val_acc,lr"
    assert len(history_lines) == 3


def test_export_empty_history_header_only(tmp_path):
    m = confusion([0, 1], [0, 1], k=2)
    paths = export_report(derive_metrics(m), [], tmp_path)
    assert paths["history"].read_text().strip() == "epoch,train_loss,train_acc,val_loss,val_acc,lr"
