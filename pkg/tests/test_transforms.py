import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relate.transforms import fft, haar_dwt, haar_idwt, ifft, next_pow2, power_spectrum, zero_pad_pow2


class TestFFT:
    def test_against_numpy_on_random_signals(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = 2 ** rng.integers(3, 9)
            x = rng.standard_normal(n)
            assert np.allclose(fft(x), np.fft.fft(x), atol=1e-9)

    def test_parseval_100_signals(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            x = rng.standard_normal(128)
            time_energy = float((x ** 2).sum())
            freq_energy = float((np.abs(fft(x)) ** 2).sum()) / 128
            assert abs(time_energy - freq_energy) / time_energy < 1e-9

    def test_rejects_non_pow2(self):
        with pytest.raises(ValueError):
            fft(np.zeros(12))

    def test_ifft_round_trip(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((4, 64))
        assert np.allclose(ifft(fft(x)), x, atol=1e-12)

    @given(st.integers(3, 7), st.integers(0, 2**31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_linearity(self, log_n, seed):
        rng = np.random.default_rng(seed)
        n = 2 ** log_n
        x, y = rng.standard_normal(n), rng.standard_normal(n)
        assert np.allclose(fft(x + 2.0 * y), fft(x) + 2.0 * fft(y), atol=1e-9)

    def test_batched_matches_rowwise(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((5, 3, 32))
        batched = fft(x)
        for i in range(5):
            for c in range(3):
                assert np.allclose(batched[i, c], fft(x[i, c]))


class TestHaar:
    def test_round_trip_100_signals(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            x = rng.standard_normal(64)
            details, approx = haar_dwt(x, 4)
            back = haar_idwt(details, approx)
            assert np.max(np.abs(back - x)) < 1e-9

    def test_orthonormal_energy(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal(32)
        details, approx = haar_dwt(x, 3)
        total = sum((d ** 2).sum() for d in details) + (approx ** 2).sum()
        assert abs(total - (x ** 2).sum()) < 1e-9

    def test_constant_signal_zero_details(self):
        details, _ = haar_dwt(np.full(16, 3.7), 4)
        for d in details:
            assert np.max(np.abs(d)) < 1e-12

    def test_spike_dominates_level1(self):
        # Unit spike: level-1 detail carries half the energy; a constant
        # signal carries none.
        spike = np.zeros(16)
        spike[6] = 1.0
        details, _ = haar_dwt(spike, 4)
        assert (details[0] ** 2).sum() == pytest.approx(0.5)

    def test_length_check(self):
        with pytest.raises(ValueError):
            haar_dwt(np.zeros(12), 3)


class TestPadding:
    def test_next_pow2(self):
        assert [next_pow2(n) for n in (1, 2, 3, 8, 9, 100)] == [1, 2, 4, 8, 16, 128]

    def test_zero_pad(self):
        x = np.ones((2, 10))
        padded = zero_pad_pow2(x)
        assert padded.shape == (2, 16)
        assert np.all(padded[:, 10:] == 0)

    def test_power_spectrum_shape(self):
        spec = power_spectrum(np.ones((3, 2, 20)))
        assert spec.shape == (3, 2, 17)  # padded to 32, one-sided bins 0..16
