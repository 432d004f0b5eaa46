"""Dataset-level similarity: CNN embedding encoders, cosine similarity, the
DTW / Wasserstein alternates, and majority voting.

Every encoder shares one architecture (two 1-D conv layers, adaptive
max-pooling to four positions, dropout before the classification head) and a
seed-derived initialization, so embeddings from independently trained
encoders live in a comparable 128-dimensional space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .data import Dataset, labels_of, stack_values
from .util import derive_seed

EMBED_DIM = 128
CONV_FILTERS = (16, 32)
KERNEL = 5
POOL_POSITIONS = 4
DROPOUT = 0.25
ENCODER_LR = 0.05
ENCODER_EPOCHS = 6
_NORM_EPS = 1e-12


class EmbeddingEncoder:
    """Per-dataset CNN whose pooled pre-head activations are the embedding."""

    def __init__(self, channels: int, length: int, num_classes: int, seed: int):
        rng = np.random.default_rng(derive_seed(seed, "encoder-init"))
        f1, f2 = CONV_FILTERS
        self.backbone = [
            nn.Conv1d(channels, f1, KERNEL, rng),
            nn.ReLU(),
            nn.Conv1d(f1, f2, KERNEL, rng),
            nn.ReLU(),
            nn.AdaptiveMaxPool(POOL_POSITIONS),
            nn.Flatten(),
        ]
        self.head = [nn.Dropout(DROPOUT), nn.Dense(EMBED_DIM, num_classes, rng)]
        self.net = nn.Network(self.backbone + self.head, (channels, length), num_classes)
        self.val_accuracy = 0.0

    def embed(self, values: np.ndarray) -> np.ndarray:
        """(N, C, L) -> (N, 128) pooled activations; dropout inactive."""
        out = np.asarray(values, dtype=np.float64)
        for layer in self.backbone:
            out, _ = layer.forward(out)
        return out

    def to_record(self) -> dict:
        return {
            "input_shape": list(self.net.input_shape),
            "num_classes": self.net.num_classes,
            "val_accuracy": self.val_accuracy,
            "params": [float(v) for v in self.net.get_flat_params()],
        }

    @staticmethod
    def from_record(rec: dict) -> "EmbeddingEncoder":
        c, length = rec["input_shape"]
        enc = EmbeddingEncoder(c, length, rec["num_classes"], seed=0)
        enc.net.set_flat_params(np.array(rec["params"], dtype=np.float64))
        enc.val_accuracy = rec["val_accuracy"]
        return enc


def train_encoder(dataset: Dataset, seed: int) -> EmbeddingEncoder:
    """Classification training on the train split; deterministic under seed.

    The initialization stream depends only on the seed (not the dataset), so
    same-shape encoders start identically across datasets.
    """
    enc = EmbeddingEncoder(dataset.channels, dataset.length, dataset.num_classes, seed)
    enc.net, enc.val_accuracy = nn.train_sgd(
        enc.net,
        stack_values(dataset.samples_train), labels_of(dataset.samples_train),
        stack_values(dataset.samples_val), labels_of(dataset.samples_val),
        lr=ENCODER_LR,
        epochs=ENCODER_EPOCHS,
        seed=derive_seed(seed, "encoder-sgd"),
    )
    return enc


@dataclass(frozen=True)
class DatasetEmbedding:
    """Unit-norm mean embedding of a sample collection."""

    vector: np.ndarray
    source: str
    condition: str = "clean"

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64)
        norm = float(np.linalg.norm(v))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"embedding norm {norm} is not 1")
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)


def embedding_sum(encoder: EmbeddingEncoder, samples) -> np.ndarray:
    """Unnormalized sum of per-sample embeddings (mean assembly helper)."""
    if not samples:
        raise ValueError("empty sample set")
    return encoder.embed(stack_values(samples)).sum(axis=0)


def embedding_from_mean(mean: np.ndarray, source: str, condition: str = "clean") -> DatasetEmbedding:
    norm = float(np.linalg.norm(mean))
    if norm < _NORM_EPS:
        raise ValueError("degenerate embedding: zero-norm mean")
    return DatasetEmbedding(mean / norm, source, condition)


def dataset_embedding(encoder: EmbeddingEncoder, samples, source: str = "",
                      condition: str = "clean") -> DatasetEmbedding:
    """L2-normalized mean of per-sample embeddings."""
    mean = embedding_sum(encoder, samples) / len(samples)
    return embedding_from_mean(mean, source, condition)


def cosine_similarity(a, b) -> float:
    """A.B / (|A| |B|); raises on zero vectors or dimension mismatch."""
    av = a.vector if isinstance(a, DatasetEmbedding) else np.asarray(a, dtype=np.float64)
    bv = b.vector if isinstance(b, DatasetEmbedding) else np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape:
        raise ValueError("embedding dimensions differ")
    na, nb = np.linalg.norm(av), np.linalg.norm(bv)
    if na < _NORM_EPS or nb < _NORM_EPS:
        raise ValueError("cosine similarity of a zero vector")
    return float(np.dot(av, bv) / (na * nb))


def dtw_distance(x, y) -> float:
    """Alignment cost with unit step moves over 1-D sequences.

    Multichannel inputs are channel-averaged first.
    """
    xs = _as_series(x)
    ys = _as_series(y)
    n, m = len(xs), len(ys)
    if n == 0 or m == 0:
        raise ValueError("empty sequence")
    cost = np.abs(xs[:, None] - ys[None, :])
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        row = acc[i]
        prev = acc[i - 1]
        for j in range(1, m + 1):
            row[j] = cost[i - 1, j - 1] + min(prev[j], row[j - 1], prev[j - 1])
    return float(acc[n, m])


def wasserstein_1d(x, y) -> float:
    """Exact 1-D optimal transport cost between pooled value distributions."""
    xs = np.sort(np.asarray(x, dtype=np.float64).reshape(-1))
    ys = np.sort(np.asarray(y, dtype=np.float64).reshape(-1))
    if xs.size == 0 or ys.size == 0:
        raise ValueError("empty sample set")
    if xs.size == ys.size:
        return float(np.mean(np.abs(xs - ys)))
    # Piecewise-constant inverse CDFs integrated over the merged quantile grid.
    qx = np.arange(1, xs.size + 1) / xs.size
    qy = np.arange(1, ys.size + 1) / ys.size
    grid = np.union1d(qx, qy)
    widths = np.diff(np.concatenate(([0.0], grid)))
    ix = np.searchsorted(qx, grid, side="left")
    iy = np.searchsorted(qy, grid, side="left")
    return float(np.sum(widths * np.abs(xs[np.minimum(ix, xs.size - 1)]
                                        - ys[np.minimum(iy, ys.size - 1)])))


def _as_series(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        return arr.mean(axis=0)
    if arr.ndim == 1:
        return arr
    raise ValueError("expected a 1-D sequence or a (C, L) matrix")


def most_similar_dataset(incoming: DatasetEmbedding, candidates: dict) -> tuple:
    """Argmax cosine over named candidate embeddings; ties go lexicographic."""
    if not candidates:
        raise ValueError("no candidate embeddings")
    best = None
    for name in sorted(candidates):
        score = cosine_similarity(incoming, candidates[name])
        if best is None or score > best[1] + 1e-15:
            best = (name, score)
    return best


def majority_vote(winners, scores=None) -> str:
    """Mode of per-attack winners; ties break by higher mean similarity, then
    lexicographically."""
    winners = list(winners)
    if not winners:
        raise ValueError("empty vote")
    counts: dict[str, int] = {}
    sums: dict[str, list] = {}
    for i, name in enumerate(winners):
        counts[name] = counts.get(name, 0) + 1
        sums.setdefault(name, []).append(scores[i] if scores is not None else 0.0)
    ranked = sorted(counts, key=lambda name: (-counts[name], -float(np.mean(sums[name])), name))
    return ranked[0]
