import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from classunc.datasets import (Dataset, GaussianFamily, LongTailSpec, SemanticSpec,
                               balanced_test_split, class_centers, duplicate_to_counts,
                               load_dataset, long_tail_counts, long_tail_dataset, save_dataset,
                               semantic_dataset, stream_rng, subsample_long_tail,
                               synth_gaussian_classes)
from classunc.errors import DatasetFormatError
from classunc.trainer import MitigationSpec, TrainConfig, run


def test_long_tail_counts_examples():
    c10 = long_tail_counts(LongTailSpec(5000, 100, 10))
    assert c10[0] == 5000 and c10[-1] == 50
    c100 = long_tail_counts(LongTailSpec(500, 100, 100))
    assert c100[0] == 500 and c100[99] == 5
    assert np.all(long_tail_counts(LongTailSpec(37, 1, 6)) == 37)


@given(st.integers(1, 5000), st.floats(1, 200), st.integers(2, 50))
def test_long_tail_counts_nonincreasing(n_bar, ir, c):
    spec = LongTailSpec(n_bar, ir, c)
    if n_bar / ir < 0.5:
        with pytest.raises(ValueError):
            long_tail_counts(spec)
        return
    counts = long_tail_counts(spec)
    assert counts[0] == n_bar and np.all(np.diff(counts) <= 0) and counts.min() >= 1


def test_invalid_spec():
    with pytest.raises(ValueError):
        LongTailSpec(100, 0.5, 10)
    with pytest.raises(ValueError):
        LongTailSpec(100, 2, 1)


@pytest.fixture(scope="module")
def family():
    return GaussianFamily(5, 4, 0.5, 2.0)


def test_subsample_counts_and_determinism(family):
    spec = LongTailSpec(40, 10, 5)
    base = family.sample(40, stream_rng(0, "train"))
    a, b = subsample_long_tail(base, spec, 3), subsample_long_tail(base, spec, 3)
    assert a == b
    assert a.class_counts.tolist() == long_tail_counts(spec).tolist()


def test_subsample_ir1_keeps_every_example(family):
    base = family.sample(30, stream_rng(1, "train"))
    out = subsample_long_tail(base, LongTailSpec(30, 1, 5), 1)
    assert out == base


def test_dataset_is_immutable_and_copies_input():
    x = np.zeros((2, 2))
    ds = Dataset(x, np.array([0, 1]), 2)
    x[0, 0] = 5
    assert ds.features[0, 0] == 0
    with pytest.raises(ValueError):
        ds.features[0, 0] = 1


@pytest.mark.parametrize("x,y,c", [
    (np.zeros((0, 2)), np.zeros(0, dtype=int), 2),
    (np.zeros((2, 2)), np.array([0, 2]), 2),
    (np.array([[np.nan, 0.0]]), np.array([0]), 1),
])
def test_dataset_validation(x, y, c):
    with pytest.raises(ValueError):
        Dataset(x, y, c)


def test_zero_noise_puts_examples_on_centers():
    ds = synth_gaussian_classes(3, 4, [5, 2, 1], 0.0, 2.0, seed=0)
    centers = class_centers(3, 4, 2.0)
    assert np.array_equal(ds.features, centers[ds.labels])


@pytest.mark.parametrize("c,d", [(4, 6), (6, 2), (3, 1)])
def test_centers_min_distance_is_spacing(c, d):
    ctr = class_centers(c, d, 3.0)
    dist = [np.linalg.norm(ctr[i] - ctr[j]) for i in range(c) for j in range(i + 1, c)]
    assert min(dist) == pytest.approx(3.0, rel=1e-12)


def test_test_split_is_balanced_and_independent_of_ir(family):
    t = balanced_test_split(GaussianFamily(10, 10, 0.5, 2.0), 100, 0)
    assert len(t) == 1000 and np.all(t.class_counts == 100)
    a = LongTailSpec(50, 2, 5)
    b = LongTailSpec(50, 20, 5)
    assert long_tail_dataset(family, a, 0).class_counts.tolist() != \
        long_tail_dataset(family, b, 0).class_counts.tolist()
    assert balanced_test_split(family, 20, 0) == balanced_test_split(family, 20, 0)


def test_train_and_test_streams_differ(family):
    assert not np.array_equal(family.sample(10, stream_rng(0, "train")).features,
                              family.sample(10, stream_rng(0, "test")).features)


def test_semantic_spec_layout():
    spec = SemanticSpec(3, 2, 10, 4, 0.2, 0.8, 2.0)
    ds = semantic_dataset(spec, 0)
    assert np.all(ds.class_counts == 10)
    assert spec.hard_mask().tolist() == [True, True, False, False, False]
    assert spec.family().noise == (0.8, 0.8, 0.2, 0.2, 0.2)
    with pytest.raises(ValueError):
        SemanticSpec(3, 2, 10, 4, 0.8, 0.2, 2.0)


def test_duplicate_to_counts():
    ds = Dataset(np.arange(5.0)[:, None], np.array([0, 0, 0, 1, 1]), 2)
    out = duplicate_to_counts(ds, [3, 7], seed=0)
    assert out.class_counts.tolist() == [3, 7]
    # every added row is a literal copy of an existing class-1 row, each used 3 or 4 times
    vals = out.features[out.labels == 1, 0]
    assert set(vals.tolist()) == {3.0, 4.0}
    assert sorted(np.unique(vals, return_counts=True)[1].tolist()) == [3, 4]
    with pytest.raises(ValueError):
        duplicate_to_counts(ds, [2, 2], 0)


@pytest.mark.parametrize("name", ["d.csv", "d.bin"])
def test_round_trip(tmp_path, family, name):
    ds = family.sample([3, 1, 2, 5, 4], stream_rng(2, "train"))
    save_dataset(ds, tmp_path / name)
    assert load_dataset(tmp_path / name, 5) == ds


def test_truncated_csv_reports_line(tmp_path, family):
    ds = family.sample(2, stream_rng(0, "train"))
    text = (tmp_path / "x").with_suffix(".csv")
    save_dataset(ds, text)
    lines = text.read_text().splitlines()
    lines[-1] = lines[-1][: len(lines[-1]) // 3]
    text.write_text("\n".join(lines) + "\n")
    with pytest.raises(DatasetFormatError, match=f"line {len(lines)}"):
        load_dataset(text)


def test_bad_cell_reports_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("f0,f1,label\n1.0,2.0,0\n1.0,abc,1\n")
    with pytest.raises(DatasetFormatError, match="line 3"):
        load_dataset(p)


def test_header_only_is_empty(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("f0,f1,label\n")
    with pytest.raises(DatasetFormatError, match="empty dataset"):
        load_dataset(p)


def test_label_out_of_range(tmp_path):
    p = tmp_path / "l.csv"
    p.write_text("f0,label\n1.0,0\n2.0,3\n")
    with pytest.raises(DatasetFormatError, match="line 3"):
        load_dataset(p, num_classes=2)


def test_truncated_binary(tmp_path, family):
    ds = family.sample(2, stream_rng(0, "train"))
    p = tmp_path / "d.bin"
    save_dataset(ds, p)
    p.write_bytes(p.read_bytes()[:-3])
    with pytest.raises(DatasetFormatError):
        load_dataset(p)


def test_two_far_classes_are_separable():
    fam = GaussianFamily(2, 2, 0.1, 20.0)
    train = fam.sample(100, stream_rng(0, "train"))
    test = balanced_test_split(fam, 100, 0)
    res = run(train, test, TrainConfig(hidden=(8,), batch_size=32), MitigationSpec.naive(10), 0)
    assert res.top1_error < 1.0


@pytest.mark.slow
def test_hard_classes_have_higher_error():
    spec = SemanticSpec(5, 5, 100, 10, 0.2, 0.8, 2.5)
    hard, easy = [], []
    for seed in range(5):
        test = balanced_test_split(spec.family(), 100, seed)
        res = run(semantic_dataset(spec, seed), test, TrainConfig(learning_rate=0.05),
                  MitigationSpec.naive(30), seed)
        err = np.asarray(res.per_class_error)
        hard.append(err[spec.hard_mask()].mean())
        easy.append(err[~spec.hard_mask()].mean())
    assert np.mean(hard) > np.mean(easy)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=2, max_size=5), st.integers(0, 100))
def test_subset_preserves_rows(counts, seed):
    fam = GaussianFamily(len(counts), 3, 1.0, 1.0)
    ds = fam.sample(counts, stream_rng(seed, "train"))
    ix = np.arange(len(ds))[::2]
    sub = ds.subset(ix)
    assert np.array_equal(sub.features, ds.features[ix])
