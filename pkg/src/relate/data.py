"""Time-series containers, dataset splitting, synthetic generation, and file I/O.

A dataset on disk is a directory with ``train.csv``, ``test.csv`` and an
optional ``val.csv`` (regenerated by the 80/20 split when absent). Files are
UTF-8 text: a header line followed by one sample per line, values
channel-major.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .util import format_float, rng_for

HEADER_PREFIX = "#relate-ts v1"

TRAIN_FRACTION = 0.8


class DatasetFormatError(ValueError):
    """Malformed dataset file; message carries the offending line number."""


@dataclass(frozen=True)
class TimeSeriesSample:
    """One labeled multivariate series, values shaped (channels, length)."""

    values: np.ndarray
    label: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"sample values must be a (C, L) matrix, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("sample contains non-finite values")
        if self.label < 0:
            raise ValueError("label must be a non-negative class index")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "label", int(self.label))

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]


@dataclass
class Dataset:
    """Named dataset with train/val/test partitions and shared (C, L, K)."""

    name: str
    samples_train: list[TimeSeriesSample]
    samples_val: list[TimeSeriesSample]
    samples_test: list[TimeSeriesSample]
    num_classes: int
    channels: int
    length: int

    def __post_init__(self):
        for part in (self.samples_train, self.samples_val, self.samples_test):
            for s in part:
                if s.channels != self.channels or s.length != self.length:
                    raise ValueError(
                        f"sample shape {(s.channels, s.length)} does not match "
                        f"dataset shape {(self.channels, self.length)}"
                    )
                if s.label >= self.num_classes:
                    raise ValueError(f"label {s.label} out of range for K={self.num_classes}")
        train_labels = {s.label for s in self.samples_train}
        if self.samples_train and train_labels != set(range(self.num_classes)):
            missing = sorted(set(range(self.num_classes)) - train_labels)
            raise ValueError(f"train split is missing classes {missing}")

    def replace_splits(self, train=None, val=None, test=None, name=None) -> "Dataset":
        return Dataset(
            name=self.name if name is None else name,
            samples_train=list(self.samples_train if train is None else train),
            samples_val=list(self.samples_val if val is None else val),
            samples_test=list(self.samples_test if test is None else test),
            num_classes=self.num_classes,
            channels=self.channels,
            length=self.length,
        )


@dataclass(frozen=True)
class SegmentPattern:
    """Clean/attacked status for the five equal arrival chunks.

    ``segments`` holds None for a clean chunk or an attack-group tag for an
    attacked one.
    """

    segments: tuple

    def __post_init__(self):
        if len(self.segments) != 5:
            raise ValueError("a segment pattern has exactly 5 entries")

    @property
    def attacked_fraction(self) -> float:
        return sum(1 for s in self.segments if s is not None) / 5.0


def split_dataset(pool, seed: int):
    """80/20 train/validation split, stratified by label where counts permit.

    ``|train| = ceil(0.8 * |pool|)`` exactly; per-class counts are kept as
    close to 80% as the target total allows. Deterministic under ``seed``.
    """
    pool = list(pool)
    if not pool:
        raise ValueError("empty dataset")
    n = len(pool)
    n_train = math.ceil(TRAIN_FRACTION * n)
    rng = rng_for(seed, "split", n)

    by_class: dict[int, list[int]] = {}
    for i, s in enumerate(pool):
        by_class.setdefault(s.label, []).append(i)
    stratify = all(len(idx) >= 5 for idx in by_class.values())

    if not stratify:
        order = rng.permutation(n)
        train_idx = set(order[:n_train].tolist())
    else:
        train_idx = set()
        # Largest-remainder rounding keeps the total at exactly n_train.
        fracs = []
        for label in sorted(by_class):
            idx = by_class[label]
            share = TRAIN_FRACTION * len(idx)
            base = math.floor(share)
            fracs.append((share - base, label))
            perm = rng.permutation(len(idx))
            for j in perm[:base]:
                train_idx.add(idx[j])
            by_class[label] = [idx[j] for j in perm[base:]]
        short = n_train - len(train_idx)
        for _, label in sorted(fracs, key=lambda t: (-t[0], t[1]))[:short]:
            train_idx.add(by_class[label].pop(0))

    train = [pool[i] for i in range(n) if i in train_idx]
    val = [pool[i] for i in range(n) if i not in train_idx]
    return train, val


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the sinusoid-mixture generator.

    Noise is band-limited Gaussian with marginal std ``noise_std``: white
    noise smoothed by a unit-energy Gaussian kernel of width
    ``noise_smoothing`` samples, mimicking band-limited sensor noise.
    """

    classes: int = 4
    channels: int = 3
    length: int = 64
    samples_per_class: int = 40
    seed: int = 0
    amplitude: float = 0.22
    noise_std: float = 0.1
    noise_smoothing: float = 2.0
    base_freq: int = 4
    freq_step: int = 2
    test_fraction: float = 0.25
    name: str = field(default="synthetic")

    def __post_init__(self):
        if self.classes < 2 or self.channels < 1 or self.length < 8 or self.samples_per_class < 10:
            raise ValueError(
                "invalid generator spec: need K >= 2, C >= 1, L >= 8, samples-per-class >= 10"
            )


def _class_signal(spec: SyntheticSpec, label: int) -> tuple:
    """Per-class frequency pair and per-channel phases (no randomness).

    The primary frequency is shared by every class; class identity lives in
    the cross-channel phase pattern and a class-specific secondary frequency.
    Sharing the carrier keeps the clean spectral statistics tight across
    classes, which the anomaly calibration benefits from.
    """
    nyquist = spec.length // 2
    f1 = 1 + (spec.base_freq - 1) % max(1, nyquist - 1)
    f2 = spec.base_freq + 3 + spec.freq_step * label
    f2 = 1 + (f2 - 1) % max(1, nyquist - 1)
    phases = [
        (2.0 * math.pi * (((label + 1) * (c + 2)) % 8) / 8.0,
         2.0 * math.pi * (((label + 3) * (c + 1)) % 5) / 5.0)
        for c in range(spec.channels)
    ]
    return f1, f2, phases


def _smoothing_kernel(width: float) -> np.ndarray:
    radius = max(1, int(math.ceil(3.0 * width)))
    taps = np.exp(-0.5 * (np.arange(-radius, radius + 1) / width) ** 2)
    return taps / np.sqrt((taps ** 2).sum())


def _band_limited_noise(rng, shape, std: float, width: float) -> np.ndarray:
    """Circularly smoothed white noise; the unit-energy kernel keeps the
    marginal standard deviation at ``std``."""
    white = rng.standard_normal(shape)
    taps = _smoothing_kernel(width)
    radius = (len(taps) - 1) // 2
    out = np.zeros(shape)
    for k, w in enumerate(taps):
        out += w * np.roll(white, k - radius, axis=-1)
    return std * out


def generate_synthetic_dataset(spec: SyntheticSpec) -> Dataset:
    """Sinusoid-mixture classes plus band-limited Gaussian noise, partitioned.

    Each class mixes two class-specific frequencies with fixed per-channel
    phases; per-sample variation comes from a small amplitude/phase jitter and
    the noise. Classes are linearly separable by construction, which keeps
    oracle/selection comparisons meaningful at this scale.
    """
    rng = rng_for(spec.seed, "synth", spec.classes, spec.channels, spec.length, spec.samples_per_class)
    t = np.arange(spec.length, dtype=np.float64)
    samples = []
    for label in range(spec.classes):
        f1, f2, phases = _class_signal(spec, label)
        for _ in range(spec.samples_per_class):
            scale = 1.0 + 0.05 * rng.standard_normal()
            dphi = 0.05 * rng.standard_normal()
            vals = np.empty((spec.channels, spec.length))
            for c in range(spec.channels):
                p1, p2 = phases[c]
                vals[c] = spec.amplitude * scale * (
                    np.sin(2.0 * math.pi * f1 * t / spec.length + p1 + dphi)
                    + 0.5 * np.sin(2.0 * math.pi * f2 * t / spec.length + p2 + dphi)
                )
            vals += _band_limited_noise(rng, vals.shape, spec.noise_std, spec.noise_smoothing)
            samples.append(TimeSeriesSample(vals, label))

    # Stratified test carve-out, then the standard 80/20 split of the pool.
    n_test_per_class = max(1, int(round(spec.test_fraction * spec.samples_per_class)))
    test, pool = [], []
    for label in range(spec.classes):
        cls = [s for s in samples if s.label == label]
        perm = rng.permutation(len(cls))
        chosen = set(perm[:n_test_per_class].tolist())
        test.extend(cls[i] for i in range(len(cls)) if i in chosen)
        pool.extend(cls[i] for i in range(len(cls)) if i not in chosen)
    train, val = split_dataset(pool, spec.seed)
    return Dataset(
        name=spec.name,
        samples_train=train,
        samples_val=val,
        samples_test=test,
        num_classes=spec.classes,
        channels=spec.channels,
        length=spec.length,
    )


def _write_partition(path: str, samples, channels: int, length: int, classes: int) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{HEADER_PREFIX} channels={channels} length={length} classes={classes}\n")
        for s in samples:
            flat = s.values.reshape(-1)
            fh.write(str(s.label) + "," + ",".join(format_float(v) for v in flat) + "\n")


def write_dataset(dataset: Dataset, path: str) -> None:
    """Write train/val/test CSV files into directory ``path``."""
    os.makedirs(path, exist_ok=True)
    meta = (dataset.channels, dataset.length, dataset.num_classes)
    _write_partition(os.path.join(path, "train.csv"), dataset.samples_train, *meta)
    _write_partition(os.path.join(path, "val.csv"), dataset.samples_val, *meta)
    _write_partition(os.path.join(path, "test.csv"), dataset.samples_test, *meta)


def _parse_header(line: str, path: str):
    if not line.startswith(HEADER_PREFIX):
        raise DatasetFormatError(f"{path}:1: missing '{HEADER_PREFIX}' header")
    fields = {}
    for tok in line[len(HEADER_PREFIX):].split():
        if "=" not in tok:
            raise DatasetFormatError(f"{path}:1: malformed header field '{tok}'")
        key, _, value = tok.partition("=")
        try:
            fields[key] = int(value)
        except ValueError:
            raise DatasetFormatError(f"{path}:1: header field '{tok}' is not an integer") from None
    for key in ("channels", "length", "classes"):
        if key not in fields:
            raise DatasetFormatError(f"{path}:1: header missing '{key}'")
    if fields["channels"] < 1 or fields["length"] < 1 or fields["classes"] < 2:
        raise DatasetFormatError(f"{path}:1: header out of bounds: {fields}")
    return fields["channels"], fields["length"], fields["classes"]


def _read_partition(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetFormatError(f"{path}:1: empty file")
    channels, length, classes = _parse_header(lines[0], path)
    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 1 + channels * length:
            raise DatasetFormatError(
                f"{path}:{lineno}: expected {1 + channels * length} fields, got {len(parts)}"
            )
        try:
            label = int(parts[0])
            vals = np.array([float(p) for p in parts[1:]], dtype=np.float64)
        except ValueError:
            raise DatasetFormatError(f"{path}:{lineno}: non-numeric field") from None
        if not np.all(np.isfinite(vals)):
            raise DatasetFormatError(f"{path}:{lineno}: non-finite value")
        if not 0 <= label < classes:
            raise DatasetFormatError(f"{path}:{lineno}: label {label} out of range")
        samples.append(TimeSeriesSample(vals.reshape(channels, length), label))
    return samples, (channels, length, classes)


def read_dataset(path: str, seed: int = 0) -> Dataset:
    """Read a dataset directory; regenerate val by splitting when absent."""
    train_path = os.path.join(path, "train.csv")
    test_path = os.path.join(path, "test.csv")
    val_path = os.path.join(path, "val.csv")
    train, meta = _read_partition(train_path)
    test, meta_test = _read_partition(test_path)
    if meta_test != meta:
        raise DatasetFormatError(f"{test_path}:1: header disagrees with train.csv")
    if os.path.exists(val_path):
        val, meta_val = _read_partition(val_path)
        if meta_val != meta:
            raise DatasetFormatError(f"{val_path}:1: header disagrees with train.csv")
    else:
        train, val = split_dataset(train, seed)
    channels, length, classes = meta
    return Dataset(
        name=os.path.basename(os.path.normpath(path)),
        samples_train=train,
        samples_val=val,
        samples_test=test,
        num_classes=classes,
        channels=channels,
        length=length,
    )


def stack_values(samples) -> np.ndarray:
    """(N, C, L) array view of a sample list."""
    return np.stack([s.values for s in samples])


def labels_of(samples) -> np.ndarray:
    return np.array([s.label for s in samples], dtype=np.int64)
