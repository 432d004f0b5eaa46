"""Desk-scale classifier zoo: six differentiable architectures, training with
grid search, and the accuracy / macro-F1 metrics recorded in the benchmark
database.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .data import Dataset, labels_of, stack_values
from .util import derive_seed

ARCHITECTURES = ("linear", "mlp", "fcn_s", "fcn_l", "tcn_lite", "meanpool_mlp")

LEARNING_RATES = (0.1, 0.01)
WIDTHS = (16, 32)
# Per-architecture epoch budgets sized so every zoo member gets a comparable
# wall-clock training budget; cheap models train longer, convolutional ones
# shorter. Best-epoch selection makes the extra epochs harmless.
ARCH_EPOCHS = {
    "linear": 1000,
    "mlp": 700,
    "fcn_s": 26,
    "fcn_l": 14,
    "tcn_lite": 48,
    "meanpool_mlp": 700,
}
DEFAULT_EPOCHS = 30
BATCH_SIZE = 16
MOMENTUM = 0.9


@dataclass(frozen=True)
class ModelSpec:
    """Architecture tag plus hyperparameters drawn from the documented grid."""

    architecture: str
    hyperparams: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture '{self.architecture}'")
        hp = {"lr": 0.01, "width": 16, "epochs": ARCH_EPOCHS[self.architecture]}
        hp.update(self.hyperparams)
        object.__setattr__(self, "hyperparams", hp)

    @property
    def model_id(self) -> str:
        hp = self.hyperparams
        return f"{self.architecture}-w{hp['width']}-lr{hp['lr']:g}-e{hp['epochs']}"

    def to_record(self) -> dict:
        return {"architecture": self.architecture, "hyperparams": dict(self.hyperparams)}

    @staticmethod
    def from_record(rec: dict) -> "ModelSpec":
        return ModelSpec(rec["architecture"], dict(rec["hyperparams"]))


def default_grid(architecture: str) -> list:
    return [
        ModelSpec(architecture, {"lr": lr, "width": w, "epochs": ARCH_EPOCHS[architecture]})
        for lr in LEARNING_RATES
        for w in WIDTHS
    ]


def build_network(spec: ModelSpec, channels: int, length: int, num_classes: int,
                  rng: np.random.Generator) -> nn.Network:
    w = spec.hyperparams["width"]
    arch = spec.architecture
    if arch == "linear":
        layers = [nn.Flatten(), nn.Dense(channels * length, num_classes, rng)]
    elif arch == "mlp":
        layers = [
            nn.Flatten(),
            nn.Dense(channels * length, w, rng),
            nn.ReLU(),
            nn.Dense(w, num_classes, rng),
        ]
    elif arch == "fcn_s":
        layers = [
            nn.Conv1d(channels, w, 5, rng),
            nn.ReLU(),
            nn.Conv1d(w, w, 5, rng),
            nn.ReLU(),
            nn.GlobalMaxPool(),
            nn.Dense(w, num_classes, rng),
        ]
    elif arch == "fcn_l":
        layers = [
            nn.Conv1d(channels, w, 7, rng),
            nn.ReLU(),
            nn.Conv1d(w, 2 * w, 5, rng),
            nn.ReLU(),
            nn.Conv1d(2 * w, 2 * w, 3, rng),
            nn.ReLU(),
            nn.GlobalMaxPool(),
            nn.Dense(2 * w, num_classes, rng),
        ]
    elif arch == "tcn_lite":
        layers = [
            nn.Conv1d(channels, w, 3, rng, dilation=1, causal=True),
            nn.ReLU(),
            nn.Conv1d(w, w, 3, rng, dilation=2, causal=True),
            nn.ReLU(),
            nn.GlobalMaxPool(),
            nn.Dense(w, num_classes, rng),
        ]
    elif arch == "meanpool_mlp":
        layers = [
            nn.TemporalMean(),
            nn.Dense(channels, w, rng),
            nn.ReLU(),
            nn.Dense(w, num_classes, rng),
        ]
    else:  # pragma: no cover - guarded by ModelSpec
        raise ValueError(arch)
    return nn.Network(layers, (channels, length), num_classes)


@dataclass
class TrainedModel:
    """Immutable trained classifier; parameters never change after training."""

    spec: ModelSpec
    net: nn.Network
    val_accuracy: float

    @property
    def input_shape(self) -> tuple:
        return self.net.input_shape

    @property
    def num_classes(self) -> int:
        return self.net.num_classes

    @property
    def model_id(self) -> str:
        return self.spec.model_id

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Predicted labels for a (N, C, L) batch."""
        out, _ = self.net.forward_cached(self._batch(x))
        return out.argmax(axis=1)

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.net.forward_cached(self._batch(x))
        return nn.softmax(out)

    def _batch(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        if x.shape[1:] != self.net.input_shape:
            raise ValueError(
                f"input shape {x.shape[1:]} does not match model {self.net.input_shape}"
            )
        return x

    def losses_and_input_gradients(self, x: np.ndarray, y: np.ndarray):
        """Per-sample cross-entropy losses and gradients wrt the input batch."""
        xb = self._batch(x)
        y = np.atleast_1d(np.asarray(y, dtype=np.int64))
        if np.any(y >= self.num_classes) or np.any(y < 0):
            raise ValueError("label out of range")
        logits, caches = self.net.forward_cached(xb)
        losses, grad_logits = nn.cross_entropy(logits, y)
        grads = self.net.backward_input(grad_logits, caches)
        return losses, grads

    def logit_jacobian_rows(self, x: np.ndarray):
        """Gradients of every class logit wrt input: (N, K, C, L), plus logits.

        Tiles the batch K times and backpropagates once, which beats K
        separate backward passes at these batch sizes.
        """
        xb = self._batch(x)
        n = len(xb)
        k = self.num_classes
        tiled = np.tile(xb, (k, 1, 1))
        logits_t, caches = self.net.forward_cached(tiled)
        seed = np.zeros((k * n, k))
        for cls in range(k):
            seed[cls * n:(cls + 1) * n, cls] = 1.0
        grads = self.net.backward_input(seed, caches)
        rows = grads.reshape((k, n) + self.net.input_shape).transpose(1, 0, 2, 3)
        return rows, logits_t[:n]

    def to_record(self) -> dict:
        return {
            "spec": self.spec.to_record(),
            "input_shape": list(self.net.input_shape),
            "num_classes": self.net.num_classes,
            "val_accuracy": self.val_accuracy,
            "params": [float(v) for v in self.net.get_flat_params()],
        }

    @staticmethod
    def from_record(rec: dict) -> "TrainedModel":
        spec = ModelSpec.from_record(rec["spec"])
        c, length = rec["input_shape"]
        net = build_network(spec, c, length, rec["num_classes"], np.random.default_rng(0))
        net.set_flat_params(np.array(rec["params"], dtype=np.float64))
        return TrainedModel(spec, net, rec["val_accuracy"])


def forward(model: TrainedModel, sample) -> tuple:
    """Logits and softmax probabilities for one sample."""
    values = sample.values if hasattr(sample, "values") else np.asarray(sample)
    logits = model.net.logits(values)
    return logits, nn.softmax(logits)


def loss_and_input_gradient(model: TrainedModel, sample, label: int):
    """Cross-entropy loss and its exact gradient wrt the (C, L) input."""
    values = sample.values if hasattr(sample, "values") else np.asarray(sample)
    losses, grads = model.losses_and_input_gradients(values[None], np.array([label]))
    return float(losses[0]), grads[0]


def train(spec: ModelSpec, dataset: Dataset, seed: int) -> TrainedModel:
    """Train one zoo member; deterministic under (spec, dataset, seed)."""
    init_rng = np.random.default_rng(derive_seed(seed, "init", spec.model_id))
    net = build_network(spec, dataset.channels, dataset.length, dataset.num_classes, init_rng)
    x_train = stack_values(dataset.samples_train)
    y_train = labels_of(dataset.samples_train)
    x_val = stack_values(dataset.samples_val)
    y_val = labels_of(dataset.samples_val)
    net, best_acc = nn.train_sgd(
        net, x_train, y_train, x_val, y_val,
        lr=spec.hyperparams["lr"],
        epochs=spec.hyperparams["epochs"],
        seed=derive_seed(seed, "sgd", spec.model_id),
        batch_size=BATCH_SIZE,
        momentum=MOMENTUM,
    )
    return TrainedModel(spec, net, max(best_acc, 0.0))


def training_cost(spec: ModelSpec, dataset: Dataset) -> int:
    """Deterministic cost proxy for tie-breaking: parameters times epochs."""
    net = build_network(spec, dataset.channels, dataset.length, dataset.num_classes,
                        np.random.default_rng(0))
    n_params = sum(p.size for p in net.params())
    return n_params * spec.hyperparams["epochs"]


def tune(architecture: str, dataset: Dataset, grid, seed: int) -> ModelSpec:
    """Exhaustive grid search by validation accuracy.

    Ties go to the lower training-cost spec, then to grid order.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("empty hyperparameter grid")
    best = None
    for order, spec in enumerate(grid):
        if spec.architecture != architecture:
            raise ValueError(f"grid entry {spec.model_id} is not a {architecture}")
        model = train(spec, dataset, seed)
        key = (-model.val_accuracy, training_cost(spec, dataset), order)
        if best is None or key < best[0]:
            best = (key, spec)
    return best[1]


def accuracy(model: TrainedModel, samples) -> float:
    if not samples:
        raise ValueError("empty sample list")
    preds = model.predict(stack_values(samples))
    return float(np.mean(preds == labels_of(samples)))


def f1_macro(model: TrainedModel, samples) -> float:
    """Unweighted mean of per-class F1 over all K classes; 0 where P+R=0."""
    if not samples:
        raise ValueError("empty sample list")
    preds = model.predict(stack_values(samples))
    truth = labels_of(samples)
    k = model.num_classes
    f1s = []
    for cls in range(k):
        tp = float(np.sum((preds == cls) & (truth == cls)))
        fp = float(np.sum((preds == cls) & (truth != cls)))
        fn = float(np.sum((preds != cls) & (truth == cls)))
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1s.append(2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0)
    return float(np.mean(f1s))
