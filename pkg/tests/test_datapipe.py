import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import make_corpus, make_image

from anemiascreen.datapipe import (
    DatasetSplit, Site, compute_class_weights, load_dataset, stratified_split,
)
from anemiascreen.errors import ConfigurationError, EmptyDatasetError


def test_load_dataset_basic(tmp_path):
    root = tmp_path / "data"
    (root / "anemic").mkdir(parents=True)
    (root / "non_anemic").mkdir()
    make_image().save(root / "anemic" / "a.jpg")
    make_image().save(root / "non_anemic" / "b.jpg")

    index = load_dataset(root)
    assert len(index) == 2
    assert {s.label for s in index.samples} == {0, 1}
    assert index.class_names == ("anemic", "non_anemic")


def test_load_dataset_missing_root(tmp_path):
    with pytest.raises(ConfigurationError):
        load_dataset(tmp_path / "nope")


def test_load_dataset_empty_root(tmp_path):
    root = tmp_path / "empty"
    root.mkdir()
    with pytest.raises(EmptyDatasetError):
        load_dataset(root)
    (root / "anemic").mkdir()
    with pytest.raises(EmptyDatasetError):
        load_dataset(root)


def test_corrupt_file_skipped_not_fatal(tmp_path, caplog):
    root = make_corpus(tmp_path / "data", per_class=5)
    good = root / "anemic" / "img_000.png"
    truncated = root / "anemic" / "broken.png"
    truncated.write_bytes(good.read_bytes()[:120])  # valid header, unreadable body

    with caplog.at_level("WARNING"):
        index = load_dataset(root)
    assert len(index) == 10
    assert index.skipped == 1
    assert any("broken.png" in r.message for r in caplog.records)


def test_reload_is_byte_identical(tmp_path):
    root = make_corpus(tmp_path / "data", per_class=4)
    first = load_dataset(root)
    second = load_dataset(root)
    assert [s.id for s in first.samples] == [s.id for s in second.samples]
    assert [s.label for s in first.samples] == [s.label for s in second.samples]


def test_site_inference(tmp_path):
    root = tmp_path / "data"
    d = root / "anemic"
    d.mkdir(parents=True)
    make_image().save(d / "conjunctiva_01.png")
    make_image().save(d / "fingernail_01.png")
    make_image().save(d / "photo.png")
    index = load_dataset(root)
    sites = {s.path.name: s.site for s in index.samples}
    assert sites["conjunctiva_01.png"] == Site.CONJUNCTIVA
    assert sites["fingernail_01.png"] == Site.FINGERNAIL
    assert sites["photo.png"] == Site.UNKNOWN


def test_tiny_image_upscaled(tmp_path):
    d = tmp_path / "data" / "anemic"
    d.mkdir(parents=True)
    make_image(size=(40, 30)).save(d / "small.png")
    index = load_dataset(tmp_path / "data")
    pixels = index.samples[0].load_pixels()
    assert min(pixels.shape[:2]) >= 64


class _FakeIndex:
    """Minimal stand-in so split tests can run without image files."""

    def __init__(self, labels):
        from anemiascreen.datapipe import ImageSample

        self.class_names = tuple(f"c{i}" for i in range(max(labels) + 1))
        self.samples = tuple(
            ImageSample(id=f"s{i:05d}", path=None, label=lab) for i, lab in enumerate(labels)
        )

    def __len__(self):
        return len(self.samples)


def test_split_exact_divisibility():
    index = _FakeIndex([0] * 50 + [1] * 50)
    split = stratified_split(index, seed=7)
    assert (len(split.train), len(split.val), len(split.test)) == (70, 10, 20)
    for ids, expected in ((split.train, 35), (split.val, 5), (split.test, 10)):
        per_class = sum(1 for i in ids if int(i[1:]) < 50)
        assert per_class == expected


def test_split_deterministic():
    index = _FakeIndex([0] * 37 + [1] * 64)
    a = stratified_split(index, seed=13)
    b = stratified_split(index, seed=13)
    assert a.train == b.train and a.val == b.val and a.test == b.test
    c = stratified_split(index, seed=14)
    assert c.train != a.train


def _independent_largest_remainder(n, fractions):
    targets = [n * f for f in fractions]
    floors = [int(t) for t in targets]
    rem = sorted(range(3), key=lambda i: targets[i] - floors[i], reverse=True)
    for i in rem[: n - sum(floors)]:
        floors[i] += 1
    return floors


def test_split_101_samples_within_one_of_target():
    # oracle: per-class largest-remainder allocation recomputed independently
    index = _FakeIndex([0] * 51 + [1] * 50)
    split = stratified_split(index, seed=3)
    sizes = (len(split.train), len(split.val), len(split.test))
    assert sum(sizes) == 101
    expected_total = [0, 0, 0]
    for n_c in (51, 50):
        alloc = _independent_largest_remainder(n_c, (0.7, 0.1, 0.2))
        expected_total = [a + b for a, b in zip(expected_total, alloc)]
    assert list(sizes) == expected_total
    for size, frac in zip(sizes, (0.7, 0.1, 0.2)):
        assert abs(size - 101 * frac) <= 1.0


def test_split_bad_fractions():
    index = _FakeIndex([0, 0, 0, 1, 1, 1])
    with pytest.raises(ConfigurationError):
        stratified_split(index, fractions=(0.7, 0.2, 0.2))


def test_split_small_class_warns(caplog):
    index = _FakeIndex([0] * 98 + [1] * 2)
    with caplog.at_level("WARNING"):
        split = stratified_split(index, seed=0)
    assert any("only 2" in r.message for r in caplog.records)
    covered = set(split.train) | set(split.val) | set(split.test)
    assert len(covered) == 100


@settings(max_examples=60, deadline=None)
@given(
    n0=st.integers(min_value=3, max_value=400),
    n1=st.integers(min_value=3, max_value=400),
    seed=st.integers(min_value=0, max_value=999),
)
def test_split_properties(n0, n1, seed):
    index = _FakeIndex([0] * n0 + [1] * n1)
    split = stratified_split(index, seed=seed)
    train, val, test = set(split.train), set(split.val), set(split.test)
    assert not (train & val) and not (train & test) and not (val & test)
    assert len(train | val | test) == n0 + n1
    # every class in every split once it has >= 3 samples
    for ids in (train, val, test):
        assert any(int(i[1:]) < n0 for i in ids)
        assert any(int(i[1:]) >= n0 for i in ids)
    # per-split class proportion within +-1 sample of the global proportion;
    # a 3-sample class must be spread as (1,1,1), which can sit up to 1.1
    # samples from the 0.7-fraction target, so representation wins there
    total = n0 + n1
    bound = 1.0 if min(n0, n1) >= 4 else 1.2
    for ids in (split.train, split.val, split.test):
        got0 = sum(1 for i in ids if int(i[1:]) < n0)
        assert abs(got0 - len(ids) * n0 / total) <= bound + 1e-9


def test_split_manifest_roundtrip():
    index = _FakeIndex([0] * 10 + [1] * 10)
    split = stratified_split(index, seed=5)
    doc = json.loads(split.to_json())
    assert doc["seed"] == 5
    assert doc["fractions"] == [0.7, 0.1, 0.2]
    restored = DatasetSplit.from_json(split.to_json())
    assert restored == split


def test_class_weights_balanced():
    assert compute_class_weights([500, 500]).weights == (1.0, 1.0)


def test_class_weights_imbalanced():
    w = compute_class_weights([300, 700]).weights
    assert w[0] == pytest.approx(1.6667, abs=1e-3)
    assert w[1] == pytest.approx(0.7143, abs=1e-3)


def test_class_weights_extreme():
    w = compute_class_weights([1, 999]).weights
    assert w[0] == pytest.approx(500.0, abs=1e-3)
    assert w[1] == pytest.approx(0.5005, abs=1e-3)


def test_class_weights_zero_count_rejected():
    with pytest.raises(ConfigurationError):
        compute_class_weights([10, 0])


@settings(max_examples=100, deadline=None)
@given(counts=st.lists(st.integers(min_value=1, max_value=10_000), min_size=2, max_size=5))
def test_class_weight_invariants(counts):
    cw = compute_class_weights(counts)
    w = cw.as_array()
    assert (w > 0).all()
    # expected weight of a random sample is exactly 1
    n = sum(counts)
    assert sum(c / n * wi for c, wi in zip(counts, w)) == pytest.approx(1.0, abs=1e-9)
    # inversely ordered to counts
    order_by_count = np.argsort(counts)
    assert (np.argsort(-w) == order_by_count).all() or len(set(counts)) < len(counts)
