"""Spectral anomaly detection and three-way case routing.

Two detectors score deviations from clean training data: a Fourier detector
over banded log-energies (global, periodic distortions) and a Haar-wavelet
detector over per-level detail log-energies (localized, high-frequency
anomalies). The higher of the two per-collection detection rates is the fused
ratio that routes an arrival to clean / fully attacked / partially attacked.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .data import SegmentPattern, stack_values
from .transforms import haar_dwt, next_pow2, power_spectrum, zero_pad_pow2

FOURIER_BANDS = 16
WAVELET_LEVELS = 4
DEFAULT_PERCENTILE = 99.0
DEFAULT_THRESHOLD = 0.13
SEGMENT_THRESHOLD = 0.5
INTENSITY_LEVELS = (20, 40, 60, 80)

_LOG_FLOOR = 1e-12
_STD_FLOOR = 1e-8


class Case(enum.Enum):
    """Arrival taxonomy: clean, fully attacked, or partially attacked."""

    CASE1 = "case1"
    CASE2 = "case2"
    CASE3 = "case3"


def fourier_features(sample) -> np.ndarray:
    """Banded log-energies of the one-sided power spectrum, channel-averaged."""
    values = sample.values if hasattr(sample, "values") else np.asarray(sample)
    return fourier_features_batch(values[None])[0]


def fourier_features_batch(values: np.ndarray) -> np.ndarray:
    spec = power_spectrum(values)  # (N, C, bins)
    n_bins = spec.shape[-1]
    bounds = [(b * n_bins) // FOURIER_BANDS for b in range(FOURIER_BANDS + 1)]
    feats = np.empty((values.shape[0], values.shape[1], FOURIER_BANDS))
    for b in range(FOURIER_BANDS):
        lo, hi = bounds[b], bounds[b + 1]
        energy = spec[..., lo:hi].sum(axis=-1) if hi > lo else np.zeros(spec.shape[:-1])
        feats[..., b] = np.log(energy + _LOG_FLOOR)
    return feats.mean(axis=1)


def wavelet_features(sample, levels: int = WAVELET_LEVELS) -> np.ndarray:
    """Per-level Haar detail log-energies, channel-averaged.

    Levels reduce automatically when the (padded) length is too short.
    """
    values = sample.values if hasattr(sample, "values") else np.asarray(sample)
    return wavelet_features_batch(values[None], levels)[0]


def effective_levels(length: int, levels: int = WAVELET_LEVELS) -> int:
    padded = next_pow2(length)
    max_levels = int(np.log2(padded))
    return min(levels, max_levels)


def wavelet_features_batch(values: np.ndarray, levels: int = WAVELET_LEVELS) -> np.ndarray:
    padded = zero_pad_pow2(values)
    levels = effective_levels(values.shape[-1], levels)
    details, _ = haar_dwt(padded, levels)
    feats = np.stack(
        [np.log((d ** 2).sum(axis=-1) + _LOG_FLOOR) for d in details], axis=-1
    )  # (N, C, levels)
    return feats.mean(axis=1)


@dataclass
class SpectralDetector:
    """Per-feature z-scoring against clean training statistics.

    ``score(x) = max_f |z_f|``; the calibration threshold tau is a high
    percentile of the clean training scores.
    """

    kind: str
    means: np.ndarray
    stds: np.ndarray
    tau: float
    percentile: float
    levels: int = WAVELET_LEVELS

    def features(self, values: np.ndarray) -> np.ndarray:
        if self.kind == "fourier":
            return fourier_features_batch(values)
        return wavelet_features_batch(values, self.levels)

    def scores(self, samples) -> np.ndarray:
        values = samples if isinstance(samples, np.ndarray) else stack_values(samples)
        feats = self.features(values)
        return np.abs((feats - self.means) / self.stds).max(axis=-1)

    def to_record(self) -> dict:
        return {
            "kind": self.kind,
            "means": [float(v) for v in self.means],
            "stds": [float(v) for v in self.stds],
            "tau": float(self.tau),
            "percentile": float(self.percentile),
            "levels": int(self.levels),
        }

    @staticmethod
    def from_record(rec: dict) -> "SpectralDetector":
        return SpectralDetector(
            kind=rec["kind"],
            means=np.array(rec["means"]),
            stds=np.array(rec["stds"]),
            tau=rec["tau"],
            percentile=rec["percentile"],
            levels=rec["levels"],
        )


def fit_detector(kind: str, clean_samples, percentile: float = DEFAULT_PERCENTILE) -> SpectralDetector:
    """Calibrate one detector on clean training samples."""
    if kind not in ("fourier", "wavelet"):
        raise ValueError(f"unknown detector kind '{kind}'")
    if len(clean_samples) < 10:
        raise ValueError("need at least 10 clean samples to calibrate")
    values = stack_values(clean_samples)
    levels = effective_levels(values.shape[-1])
    feats = fourier_features_batch(values) if kind == "fourier" else wavelet_features_batch(values, levels)
    means = feats.mean(axis=0)
    stds = np.maximum(feats.std(axis=0), _STD_FLOOR)
    scores = np.abs((feats - means) / stds).max(axis=-1)
    tau = float(np.percentile(scores, percentile))
    return SpectralDetector(kind, means, stds, tau, percentile, levels)


def detection_rate(detector: SpectralDetector, samples) -> float:
    """Fraction of samples whose anomaly score exceeds the threshold."""
    if len(samples) == 0:
        raise ValueError("empty sample set")
    return float(np.mean(detector.scores(samples) > detector.tau))


def classify_case(fourier_rate: float, wavelet_rate: float, threshold: float = DEFAULT_THRESHOLD):
    """Fuse the two rates (max) and route: below T clean, above 1-T full.

    Both boundaries fall to the partial case (strict inequalities).
    """
    for r in (fourier_rate, wavelet_rate):
        if not 0.0 <= r <= 1.0:
            raise ValueError(f"detection rate {r} outside [0, 1]")
    fused = max(fourier_rate, wavelet_rate)
    if fused < threshold:
        return Case.CASE1, fused
    if fused > 1.0 - threshold:
        return Case.CASE2, fused
    return Case.CASE3, fused


def snap_intensity(fused_rate: float, threshold: float = DEFAULT_THRESHOLD) -> int:
    """Nearest predefined intensity level (percent); midpoints snap down."""
    if not threshold < fused_rate < 1.0 - threshold:
        raise ValueError(f"fused rate {fused_rate} outside the partial band")
    pct = 100.0 * fused_rate
    best = None
    for level in INTENSITY_LEVELS:
        dist = abs(pct - level)
        if best is None or dist < best[0] - 1e-12:
            best = (dist, level)
    return best[1]


def segment_slices(n: int, k: int = 5) -> list:
    """Contiguous near-equal blocks; the remainder joins the last block."""
    if n < k:
        raise ValueError(f"need at least {k} samples to form {k} segments")
    base = n // k
    bounds = [i * base for i in range(k)] + [n]
    return [slice(bounds[i], bounds[i + 1]) for i in range(k)]


def classify_segments(fourier_det: SpectralDetector, wavelet_det: SpectralDetector,
                      samples, n_segments: int = 5) -> list:
    """Per-segment attacked/clean verdicts at the 50% fused-rate threshold."""
    verdicts = []
    for sl in segment_slices(len(samples), n_segments):
        seg = samples[sl]
        fr = detection_rate(fourier_det, seg)
        wr = detection_rate(wavelet_det, seg)
        verdicts.append(max(fr, wr) > SEGMENT_THRESHOLD)
    return verdicts


@dataclass
class DetectionReport:
    """Module-1 output: rates, routed case, and the partial-attack details."""

    fourier_rate: float
    wavelet_rate: float
    fused_rate: float
    case: Case
    intensity: int | None = None
    segment_verdicts: list | None = None

    def __post_init__(self):
        if abs(self.fused_rate - max(self.fourier_rate, self.wavelet_rate)) > 1e-12:
            raise ValueError("fused rate must be the max of the two rates")
        if (self.intensity is not None) != (self.case is Case.CASE3):
            raise ValueError("intensity is present exactly when the case is partial")

    def to_record(self) -> dict:
        return {
            "fourier_rate": round(self.fourier_rate, 4),
            "wavelet_rate": round(self.wavelet_rate, 4),
            "fused_rate": round(self.fused_rate, 4),
            "case": self.case.value,
            "intensity": self.intensity,
            "segment_verdicts": (
                None if self.segment_verdicts is None
                else ["attacked" if v else "clean" for v in self.segment_verdicts]
            ),
        }


def detect(fourier_det: SpectralDetector, wavelet_det: SpectralDetector, samples,
           threshold: float = DEFAULT_THRESHOLD) -> DetectionReport:
    """Run Module-1 end to end on one sample collection."""
    fr = detection_rate(fourier_det, samples)
    wr = detection_rate(wavelet_det, samples)
    case, fused = classify_case(fr, wr, threshold)
    intensity = None
    verdicts = None
    if case is Case.CASE3:
        intensity = snap_intensity(fused, threshold)
        verdicts = classify_segments(fourier_det, wavelet_det, samples)
    return DetectionReport(fr, wr, fused, case, intensity, verdicts)


def pattern_from_verdicts(verdicts, groups) -> SegmentPattern:
    """Bundle per-segment verdicts and predicted groups into a pattern."""
    segments = tuple(groups[i] if verdicts[i] else None for i in range(5))
    return SegmentPattern(segments)
