import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relate.data import (Dataset, DatasetFormatError, SegmentPattern, SyntheticSpec,
                         TimeSeriesSample, generate_synthetic_dataset, labels_of,
                         read_dataset, split_dataset, stack_values, write_dataset)


def make_pool(n, classes=2, seed=0):
    rng = np.random.default_rng(seed)
    return [TimeSeriesSample(rng.standard_normal((2, 8)), i % classes) for i in range(n)]


class TestSamples:
    def test_rejects_non_finite(self):
        vals = np.zeros((2, 8))
        vals[0, 0] = np.nan
        with pytest.raises(ValueError):
            TimeSeriesSample(vals, 0)

    def test_rejects_bad_shape(self):
        with pytest.raises(ValueError):
            TimeSeriesSample(np.zeros(8), 0)

    def test_values_are_frozen(self):
        s = TimeSeriesSample(np.zeros((1, 8)), 0)
        with pytest.raises(ValueError):
            s.values[0, 0] = 1.0

    def test_segment_pattern_length(self):
        with pytest.raises(ValueError):
            SegmentPattern((None, None, None))


class TestSplit:
    def test_ten_samples_gives_8_2(self):
        train, val = split_dataset(make_pool(10), seed=0)
        assert (len(train), len(val)) == (8, 2)

    def test_five_samples_one_class(self):
        pool = make_pool(5, classes=1)
        train, val = split_dataset(pool, seed=0)
        assert (len(train), len(val)) == (4, 1)

    def test_deterministic(self):
        pool = make_pool(23, classes=3)
        a = split_dataset(pool, seed=5)
        b = split_dataset(pool, seed=5)
        assert all(x is y for x, y in zip(a[0], b[0]))
        assert all(x is y for x, y in zip(a[1], b[1]))

    def test_empty_pool(self):
        with pytest.raises(ValueError, match="empty dataset"):
            split_dataset([], seed=0)

    def test_stratified_when_counts_permit(self):
        pool = make_pool(40, classes=4, seed=1)
        train, _ = split_dataset(pool, seed=2)
        counts = np.bincount(labels_of(train), minlength=4)
        assert set(counts.tolist()) == {8}

    @given(n=st.integers(min_value=1, max_value=60), seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_partition_property(self, n, seed):
        pool = make_pool(n, classes=3, seed=seed % 100)
        train, val = split_dataset(pool, seed=seed)
        assert len(train) == math.ceil(0.8 * n)
        assert len(train) + len(val) == n
        ids = {id(s) for s in pool}
        assert {id(s) for s in train} | {id(s) for s in val} == ids
        assert not ({id(s) for s in train} & {id(s) for s in val})


class TestSyntheticGenerator:
    def test_sample_count(self):
        ds = generate_synthetic_dataset(SyntheticSpec(seed=7))
        total = len(ds.samples_train) + len(ds.samples_val) + len(ds.samples_test)
        assert total == 4 * 40

    def test_deterministic(self):
        a = generate_synthetic_dataset(SyntheticSpec(seed=9))
        b = generate_synthetic_dataset(SyntheticSpec(seed=9))
        assert all(np.array_equal(x.values, y.values) and x.label == y.label
                   for x, y in zip(a.samples_train, b.samples_train))

    def test_rejects_bad_spec(self):
        with pytest.raises(ValueError):
            SyntheticSpec(classes=1)
        with pytest.raises(ValueError):
            SyntheticSpec(length=4)

    def test_linear_probe_above_90(self, default_dataset):
        # Independent separability oracle: closed-form ridge one-vs-rest probe.
        ds = default_dataset
        xtr = stack_values(ds.samples_train).reshape(len(ds.samples_train), -1)
        xte = stack_values(ds.samples_test).reshape(len(ds.samples_test), -1)
        a = np.hstack([xtr, np.ones((len(xtr), 1))])
        targets = np.eye(ds.num_classes)[labels_of(ds.samples_train)]
        w = np.linalg.solve(a.T @ a + 1e-3 * np.eye(a.shape[1]), a.T @ targets)
        preds = (np.hstack([xte, np.ones((len(xte), 1))]) @ w).argmax(axis=1)
        assert np.mean(preds == labels_of(ds.samples_test)) > 0.90

    def test_interclass_exceeds_intraclass_distance(self, default_dataset):
        ds = default_dataset
        x = stack_values(ds.samples_train).reshape(len(ds.samples_train), -1)
        y = labels_of(ds.samples_train)
        dists = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=-1)
        same = y[:, None] == y[None, :]
        off_diag = ~np.eye(len(x), dtype=bool)
        assert dists[~same].mean() > dists[same & off_diag].mean()

    def test_noise_marginal_std(self):
        # Marginal noise std should track the spec despite smoothing.
        spec = SyntheticSpec(seed=3, amplitude=0.0, samples_per_class=60)
        ds = generate_synthetic_dataset(spec)
        vals = stack_values(ds.samples_train)
        assert abs(vals.std() - spec.noise_std) < 0.02


class TestIO:
    def test_round_trip(self, tmp_path, default_dataset):
        path = str(tmp_path / "ds")
        write_dataset(default_dataset, path)
        back = read_dataset(path)
        for part in ("samples_train", "samples_val", "samples_test"):
            orig, loaded = getattr(default_dataset, part), getattr(back, part)
            assert len(orig) == len(loaded)
            assert all(np.array_equal(a.values, b.values) and a.label == b.label
                       for a, b in zip(orig, loaded))
        assert (back.num_classes, back.channels, back.length) == (
            default_dataset.num_classes, default_dataset.channels, default_dataset.length)

    def test_row_arity_error_names_line(self, tmp_path):
        d = tmp_path / "bad"
        d.mkdir()
        header = "#relate-ts v1 channels=2 length=4 classes=2\n"
        good = "0," + ",".join(["0.0"] * 8) + "\n"
        short = "1," + ",".join(["0.0"] * 7) + "\n"
        (d / "train.csv").write_text(header + good + good + short)
        (d / "test.csv").write_text(header + good)
        with pytest.raises(DatasetFormatError, match=r":4"):
            read_dataset(str(d))

    def test_header_zero_channels(self, tmp_path):
        d = tmp_path / "bad"
        d.mkdir()
        (d / "train.csv").write_text("#relate-ts v1 channels=0 length=4 classes=2\n")
        (d / "test.csv").write_text("#relate-ts v1 channels=0 length=4 classes=2\n")
        with pytest.raises(DatasetFormatError, match="out of bounds"):
            read_dataset(str(d))

    def test_non_finite_value_rejected(self, tmp_path):
        d = tmp_path / "bad"
        d.mkdir()
        header = "#relate-ts v1 channels=1 length=4 classes=2\n"
        (d / "train.csv").write_text(header + "0,1.0,2.0,inf,0.0\n")
        (d / "test.csv").write_text(header)
        with pytest.raises(DatasetFormatError, match=r":2"):
            read_dataset(str(d))

    def test_val_regenerated_when_absent(self, tmp_path, default_dataset):
        path = str(tmp_path / "ds")
        write_dataset(default_dataset, path)
        (tmp_path / "ds" / "val.csv").unlink()
        back = read_dataset(path, seed=0)
        # The stored train split becomes the pool and is re-split 80/20.
        pool_size = len(default_dataset.samples_train)
        assert len(back.samples_train) == math.ceil(0.8 * pool_size)
        assert len(back.samples_train) + len(back.samples_val) == pool_size


class TestDatasetInvariants:
    def test_shape_mismatch_rejected(self):
        good = TimeSeriesSample(np.zeros((2, 8)), 0)
        bad = TimeSeriesSample(np.zeros((2, 9)), 1)
        with pytest.raises(ValueError, match="shape"):
            Dataset("d", [good, bad], [], [good], num_classes=2, channels=2, length=8)

    def test_missing_train_class_rejected(self):
        s = TimeSeriesSample(np.zeros((1, 8)), 0)
        with pytest.raises(ValueError, match="missing classes"):
            Dataset("d", [s], [], [], num_classes=2, channels=1, length=8)
