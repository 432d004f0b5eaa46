import numpy as np
import pytest

from relate.attacks import ATTACK_KINDS, GROUP1, GROUP2, AttackSpec, attack_dataset, group_of
from relate.data import TimeSeriesSample
from relate.group_classifier import (GroupClassifier, Stump, build_group_training_set,
                                     extract_group_features, predict_group,
                                     train_group_classifier)
from relate.util import derive_seed


def sin_samples(n, freq=4, length=64, seed=0, noise=0.0):
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    out = []
    for _ in range(n):
        x = np.sin(2 * np.pi * freq * t / length)[None, :] + noise * rng.standard_normal((1, length))
        out.append(TimeSeriesSample(x, 0))
    return out


class TestFeatures:
    def test_white_noise_flatter_than_sinusoid(self):
        noisy = sin_samples(8, noise=0.5, seed=1)
        pure = sin_samples(8, noise=0.001, seed=2)
        f_noisy = extract_group_features(noisy)
        f_pure = extract_group_features(pure)
        assert f_noisy[1] > f_pure[1]  # spectral flatness mean

    def test_sparse_spike_max_mean_beats_dense_sign(self):
        rng = np.random.default_rng(3)
        base = rng.standard_normal((1, 64)) * 0.1
        sparse = base.copy()
        sparse[0, 30] += 1.0
        dense = base + 0.1 * np.sign(rng.standard_normal((1, 64)))
        f_sparse = extract_group_features([TimeSeriesSample(sparse, 0)] * 2)
        f_dense = extract_group_features([TimeSeriesSample(dense, 0)] * 2)
        assert f_sparse[3] > f_dense[3]  # first-difference max/mean ratio

    def test_order_invariance(self, default_dataset):
        samples = default_dataset.samples_val
        rng = np.random.default_rng(4)
        shuffled = [samples[i] for i in rng.permutation(len(samples))]
        assert np.array_equal(extract_group_features(samples), extract_group_features(shuffled))

    def test_needs_two_samples(self, default_dataset):
        with pytest.raises(ValueError):
            extract_group_features(default_dataset.samples_val[:1])

    def test_all_finite(self, default_dataset):
        feats = extract_group_features(default_dataset.samples_val)
        assert feats.shape == (12,)
        assert np.all(np.isfinite(feats))


class TestBoosting:
    def test_separable_toy_is_learned_in_5_rounds(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((40, 12))
        y = (x[:, 0] > 0).astype(float)
        clf = train_group_classifier(x, y.tolist(), rounds=5)
        assert np.mean((clf.predict_proba(x) >= 0.5) == y) == 1.0

    def test_single_round_is_one_stump(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((30, 12))
        y = (x[:, 2] > 0.1).astype(float)
        clf = train_group_classifier(x, y.tolist(), rounds=1)
        assert len(clf.stumps) == 1
        assert clf.stumps[0].feature == 2

    def test_deterministic(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((30, 12))
        y = (x[:, 1] + 0.2 * rng.standard_normal(30) > 0).astype(float)
        a = train_group_classifier(x, y.tolist(), rounds=10)
        b = train_group_classifier(x, y.tolist(), rounds=10)
        assert a.to_record() == b.to_record()

    def test_single_class_rejected(self):
        x = np.zeros((10, 12))
        with pytest.raises(ValueError):
            train_group_classifier(x, [1.0] * 10)

    def test_record_round_trip(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal((30, 12))
        y = (x[:, 0] > 0).astype(float)
        clf = train_group_classifier(x, y.tolist(), rounds=7)
        back = GroupClassifier.from_record(clf.to_record())
        assert np.allclose(back.predict_proba(x), clf.predict_proba(x), atol=1e-15)

    def test_stump_predict(self):
        s = Stump(feature=1, threshold=0.5, left=-1.0, right=2.0)
        x = np.array([[0, 0.2], [0, 0.9]])
        assert np.array_equal(s.predict(x), [-1.0, 2.0])


class TestOnPBD:
    def test_training_set_arity(self, small_pbd):
        feats, labels = build_group_training_set(small_pbd, seed=0, bootstrap=0)
        assert feats.shape == (len(small_pbd.datasets) * 7, 12)
        kinds_per_dataset = [group_of(k) for k in ATTACK_KINDS]
        assert labels == kinds_per_dataset * len(small_pbd.datasets)

    def test_training_set_deterministic(self, small_pbd):
        a, _ = build_group_training_set(small_pbd, seed=3, bootstrap=2)
        b, _ = build_group_training_set(small_pbd, seed=3, bootstrap=2)
        assert np.array_equal(a, b)

    def test_training_accuracy_at_least_095(self, small_pbd):
        feats, labels = build_group_training_set(small_pbd, seed=derive_seed(small_pbd.seed, "group"))
        clf = small_pbd.group_classifier
        preds = clf.predict_proba(feats) >= 0.5
        truth = np.array([lab == GROUP1 for lab in labels])
        assert np.mean(preds == truth) >= 0.95

    def test_predict_group_end_to_end(self, small_pbd):
        name = "alpha"
        dataset = small_pbd.datasets[name]
        model = small_pbd.reference_models[name]
        reference = dataset.samples_train
        bim_adv, _ = attack_dataset(model, dataset.samples_val, AttackSpec("bim"), seed=9)
        group, conf = predict_group(small_pbd.group_classifier, bim_adv, reference)
        assert group == GROUP1
        assert 0.0 <= conf <= 1.0
        boundary_adv, _ = attack_dataset(model, dataset.samples_val, AttackSpec("boundary"), seed=9)
        group2, _ = predict_group(small_pbd.group_classifier, boundary_adv, reference)
        assert group2 == GROUP2

    def test_untrained_classifier_rejected(self, default_dataset):
        with pytest.raises(ValueError):
            predict_group(GroupClassifier(), default_dataset.samples_val)

    def test_reference_normalization_centers_clean_data(self, default_dataset):
        # Clean validation scored against the clean train reference sits near
        # the origin of the z-feature space.
        feats = extract_group_features(default_dataset.samples_val,
                                       default_dataset.samples_train)
        assert np.all(np.abs(feats[:6]) < 3.0)
