"""Arrival-scenario construction for experiments.

A scenario takes a clean dataset and produces an :class:`IncomingExperiment`:
the validation and test splits are perturbed according to the condition
(attacks are generated against a surrogate model trained on the arrival's own
training split), while the clean test split is kept aside as evaluation
ground truth.
"""

from __future__ import annotations

from . import models as M
from .attacks import AttackSpec, attack_dataset
from .data import Dataset
from .detection import segment_slices
from .pipeline import IncomingCondition, IncomingExperiment
from .util import derive_seed

SURROGATE_SPEC = M.ModelSpec("mlp", {"lr": 0.1, "width": 32})


def clean_arrival(dataset: Dataset) -> IncomingExperiment:
    return IncomingExperiment(
        dataset=dataset,
        condition=IncomingCondition("clean"),
        clean_test=list(dataset.samples_test),
    )


def full_attack_arrival(dataset: Dataset, attack: AttackSpec, seed: int) -> IncomingExperiment:
    """Every validation and test sample perturbed by one attack."""
    surrogate = M.train(SURROGATE_SPEC, dataset, derive_seed(seed, "surrogate"))
    val, _ = attack_dataset(surrogate, dataset.samples_val, attack, derive_seed(seed, "arrival-val"))
    test, _ = attack_dataset(surrogate, dataset.samples_test, attack, derive_seed(seed, "arrival-test"))
    return IncomingExperiment(
        dataset=dataset.replace_splits(val=val, test=test),
        condition=IncomingCondition("full", attack=attack),
        clean_test=list(dataset.samples_test),
    )


def partial_attack_arrival(dataset: Dataset, pattern, seed: int) -> IncomingExperiment:
    """Five-segment arrival; ``pattern`` holds an AttackSpec or None per segment."""
    pattern = tuple(pattern)
    if len(pattern) != 5:
        raise ValueError("pattern needs exactly 5 entries")
    surrogate = M.train(SURROGATE_SPEC, dataset, derive_seed(seed, "surrogate"))

    def apply(samples, tag):
        out = list(samples)
        for i, sl in enumerate(segment_slices(len(out))):
            if pattern[i] is not None:
                seg, _ = attack_dataset(surrogate, out[sl], pattern[i],
                                        derive_seed(seed, tag, i))
                out[sl] = seg
        return out

    return IncomingExperiment(
        dataset=dataset.replace_splits(val=apply(dataset.samples_val, "arrival-val"),
                                       test=apply(dataset.samples_test, "arrival-test")),
        condition=IncomingCondition("partial", pattern=pattern),
        clean_test=list(dataset.samples_test),
    )


def random_pattern(rng, epsilon: float = 0.1):
    """Random five-segment pattern in the style of the partial-attack setup:
    each segment flips a fair coin, attacked segments draw a uniform kind."""
    from .attacks import ATTACK_KINDS

    pattern = []
    for _ in range(5):
        if rng.random() < 0.5:
            kind = ATTACK_KINDS[rng.integers(0, len(ATTACK_KINDS))]
            pattern.append(AttackSpec(kind, epsilon=epsilon))
        else:
            pattern.append(None)
    return tuple(pattern)
