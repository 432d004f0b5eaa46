import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relate.attacks import AttackSpec, attack_dataset
from relate.data import SyntheticSpec, TimeSeriesSample, generate_synthetic_dataset
from relate.detection import (Case, DetectionReport, classify_case, classify_segments,
                              detect, detection_rate, fit_detector, fourier_features,
                              segment_slices, snap_intensity, wavelet_features)


def noise_samples(n, channels=2, length=64, seed=0, label=0):
    rng = np.random.default_rng(seed)
    return [TimeSeriesSample(rng.standard_normal((channels, length)), label) for _ in range(n)]


class TestFourierFeatures:
    def test_constant_signal_energy_in_band_zero(self):
        feats = fourier_features(np.full((1, 64), 2.5))
        assert feats.argmax() == 0
        assert np.allclose(feats[1:], np.log(1e-12))

    def test_sinusoid_band_argmax(self):
        # A pure sinusoid at bin 18 of a 64-point spectrum: band b covers
        # one-sided bins [b*33//16, (b+1)*33//16), so bin 18 sits in band 9.
        t = np.arange(64)
        x = np.sin(2 * np.pi * 18 * t / 64)[None, :]
        feats = fourier_features(x)
        bounds = [(b * 33) // 16 for b in range(17)]
        expected = next(b for b in range(16) if bounds[b] <= 18 < bounds[b + 1])
        assert expected == 9
        assert feats.argmax() == expected

    def test_feature_length(self):
        assert fourier_features(np.zeros((3, 100))).shape == (16,)


class TestWaveletFeatures:
    def test_constant_signal_floors(self):
        feats = wavelet_features(np.full((1, 64), 1.3))
        assert np.allclose(feats, np.log(1e-12))

    def test_spike_beats_constant_at_level1(self):
        spike = np.zeros((1, 64))
        spike[0, 20] = 1.0
        feats_spike = wavelet_features(spike)
        feats_const = wavelet_features(np.full((1, 64), 0.5))
        assert feats_spike[0] > feats_const[0]

    def test_level_reduction_for_short_series(self):
        feats = wavelet_features(np.zeros((1, 8)))
        assert feats.shape == (3,)  # log2(8) = 3 < 4


class TestFitDetector:
    def test_training_scores_respect_percentile(self):
        samples = noise_samples(100, seed=1)
        det = fit_detector("fourier", samples, percentile=99.0)
        exceed = int(np.sum(det.scores(samples) > det.tau))
        assert exceed <= int(np.ceil(0.01 * len(samples))) + 1

    def test_constant_feature_no_nan(self):
        samples = [TimeSeriesSample(np.full((1, 16), 1.0), 0) for _ in range(12)]
        det = fit_detector("wavelet", samples)
        scores = det.scores(samples)
        assert np.all(np.isfinite(scores))

    def test_deterministic(self):
        samples = noise_samples(30, seed=2)
        a = fit_detector("fourier", samples)
        b = fit_detector("fourier", samples)
        assert np.array_equal(a.means, b.means) and a.tau == b.tau

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            fit_detector("fourier", noise_samples(5))

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            fit_detector("laplace", noise_samples(12))


class TestDetectionRate:
    def test_infinite_tau_gives_zero(self):
        samples = noise_samples(20, seed=3)
        det = fit_detector("fourier", samples)
        det.tau = np.inf
        assert detection_rate(det, samples) == 0.0

    def test_clean_validation_below_threshold(self, default_dataset):
        det_f = fit_detector("fourier", default_dataset.samples_train)
        det_w = fit_detector("wavelet", default_dataset.samples_train)
        assert detection_rate(det_f, default_dataset.samples_val) < 0.13
        assert detection_rate(det_w, default_dataset.samples_val) < 0.13

    def test_fgsm_attacked_above_087(self, default_dataset, trained_mlp):
        det_f = fit_detector("fourier", default_dataset.samples_train)
        det_w = fit_detector("wavelet", default_dataset.samples_train)
        adv, _ = attack_dataset(trained_mlp, default_dataset.samples_val,
                                AttackSpec("fgsm", epsilon=0.1), seed=5)
        fused = max(detection_rate(det_f, adv), detection_rate(det_w, adv))
        assert fused > 0.87

    def test_empty_set_rejected(self, default_dataset):
        det = fit_detector("fourier", default_dataset.samples_train)
        with pytest.raises(ValueError):
            detection_rate(det, [])

    def test_monotone_under_score_inflation(self):
        samples = noise_samples(40, seed=6)
        det = fit_detector("fourier", samples)
        base = detection_rate(det, samples)
        shifted = det.scores(samples) + 1.0
        inflated_rate = float(np.mean(shifted > det.tau))
        assert inflated_rate >= base


class TestClassifyCase:
    def test_paper_case1_pair(self):
        case, fused = classify_case(0.075, 0.056)
        assert case is Case.CASE1 and fused == 0.075

    def test_paper_case2_pair(self):
        case, fused = classify_case(1.00, 1.00)
        assert case is Case.CASE2 and fused == 1.0

    def test_paper_case3_pair(self):
        case, fused = classify_case(0.156, 0.156)
        assert case is Case.CASE3

    def test_boundaries_fall_to_case3(self):
        assert classify_case(0.13, 0.0)[0] is Case.CASE3
        assert classify_case(0.87, 0.0)[0] is Case.CASE3

    def test_symmetry_and_fusion_dominance(self):
        for a, b in [(0.1, 0.5), (0.9, 0.2), (0.0, 0.0)]:
            ca, fa = classify_case(a, b)
            cb, fb = classify_case(b, a)
            assert ca == cb and fa == fb
            assert fa >= a and fa >= b

    @given(st.floats(0, 1), st.floats(0, 1))
    @settings(max_examples=200, deadline=None)
    def test_exactly_one_case(self, a, b):
        case, fused = classify_case(a, b)
        expected = (Case.CASE1 if fused < 0.13 else
                    Case.CASE2 if fused > 0.87 else Case.CASE3)
        assert case is expected

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            classify_case(1.2, 0.0)


class TestSnapIntensity:
    def test_paper_examples(self):
        assert snap_intensity(0.63) == 60
        assert snap_intensity(0.28) == 20

    def test_midpoints_snap_down(self):
        assert snap_intensity(0.50) == 40
        assert snap_intensity(0.30) == 20
        assert snap_intensity(0.70) == 60

    @given(st.floats(0.1301, 0.8699))
    @settings(max_examples=200, deadline=None)
    def test_within_ten_points(self, fused):
        level = snap_intensity(fused)
        assert abs(100 * fused - level) <= 10.0 + 1e-9

    def test_outside_band_rejected(self):
        for bad in (0.05, 0.13, 0.87, 0.95):
            with pytest.raises(ValueError):
                snap_intensity(bad)


class TestSegments:
    def test_slices_remainder_goes_last(self):
        slices = segment_slices(23)
        sizes = [s.stop - s.start for s in slices]
        assert sizes == [4, 4, 4, 4, 7]

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            segment_slices(4)

    def test_constructed_pattern_detected(self, default_dataset, trained_mlp):
        det_f = fit_detector("fourier", default_dataset.samples_train)
        det_w = fit_detector("wavelet", default_dataset.samples_train)
        val = list(default_dataset.samples_val)
        slices = segment_slices(len(val))
        for i in (0, 2):
            seg, _ = attack_dataset(trained_mlp, val[slices[i]],
                                    AttackSpec("fgsm", epsilon=0.1), seed=7)
            val[slices[i]] = seg
        verdicts = classify_segments(det_f, det_w, val)
        assert verdicts == [True, False, True, False, False]

    def test_all_clean_segments(self, default_dataset):
        det_f = fit_detector("fourier", default_dataset.samples_train)
        det_w = fit_detector("wavelet", default_dataset.samples_train)
        verdicts = classify_segments(det_f, det_w, default_dataset.samples_val)
        assert verdicts == [False] * 5

    def test_exactly_half_is_clean(self):
        # A fused segment rate of exactly 0.5 stays Clean (strict threshold).
        class StubDetector:
            def __init__(self, flag_half):
                self.tau = 0.5
                self.flag_half = flag_half

            def scores(self, samples):
                n = len(samples)
                out = np.zeros(n)
                if self.flag_half:
                    out[: n // 2] = 1.0
                return out

        samples = noise_samples(10, seed=9)
        verdicts = classify_segments(StubDetector(True), StubDetector(False), samples * 5)
        assert verdicts == [False] * 5


class TestDetectionReport:
    def test_fused_must_be_max(self):
        with pytest.raises(ValueError):
            DetectionReport(0.3, 0.2, 0.25, Case.CASE3, intensity=20)

    def test_intensity_only_for_case3(self):
        with pytest.raises(ValueError):
            DetectionReport(0.05, 0.02, 0.05, Case.CASE1, intensity=20)

    def test_full_detect_on_clean(self, default_dataset):
        det_f = fit_detector("fourier", default_dataset.samples_train)
        det_w = fit_detector("wavelet", default_dataset.samples_train)
        report = detect(det_f, det_w, default_dataset.samples_val)
        assert report.case is Case.CASE1
        assert report.intensity is None and report.segment_verdicts is None

    def test_full_detect_on_partial(self, default_dataset, trained_mlp):
        val = list(default_dataset.samples_val)
        slices = segment_slices(len(val))
        for i in (1, 3):
            seg, _ = attack_dataset(trained_mlp, val[slices[i]],
                                    AttackSpec("bim", epsilon=0.1), seed=8)
            val[slices[i]] = seg
        det_f = fit_detector("fourier", default_dataset.samples_train)
        det_w = fit_detector("wavelet", default_dataset.samples_train)
        report = detect(det_f, det_w, val)
        assert report.case is Case.CASE3
        assert report.intensity == 40
        assert report.segment_verdicts == [False, True, False, True, False]
