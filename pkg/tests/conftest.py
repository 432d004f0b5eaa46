"""Shared fixtures. The session-scoped benchmark database is expensive to
build, so every test module that needs one reuses it."""

import dataclasses

import pytest

from relate.data import SyntheticSpec, generate_synthetic_dataset
from relate.models import ARCHITECTURES, ModelSpec, train
from relate.pipeline import build_pbd

PBD_SEED = 42

# Class frequencies stay below half-Nyquist (L=64 -> one-sided bin 16) so the
# spectral features see class content in their low bands only.
PBD_SPECS = {
    "alpha": SyntheticSpec(seed=1, name="alpha"),
    "beta": SyntheticSpec(seed=2, name="beta", base_freq=6, freq_step=2),
    "gamma": SyntheticSpec(seed=3, name="gamma", base_freq=2, freq_step=3, amplitude=0.3),
    "delta": SyntheticSpec(seed=4, name="delta", base_freq=8, freq_step=1, classes=5),
}

SINGLE_POINT_GRIDS = {a: [ModelSpec(a, {"lr": 0.1, "width": 16})] for a in ARCHITECTURES}


def sibling_of(name: str, seed: int) -> SyntheticSpec:
    """Same generator parameters as a PBD dataset, fresh seed."""
    base = PBD_SPECS[name]
    return dataclasses.replace(base, seed=seed, name=f"{name}-sib{seed}")


@pytest.fixture(scope="session")
def default_dataset():
    return generate_synthetic_dataset(SyntheticSpec(seed=7))


@pytest.fixture(scope="session")
def trained_mlp(default_dataset):
    return train(ModelSpec("mlp", {"lr": 0.1, "width": 32}), default_dataset, seed=3)


@pytest.fixture(scope="session")
def trained_fcn(default_dataset):
    return train(ModelSpec("fcn_s", {"lr": 0.1, "width": 16}), default_dataset, seed=3)


@pytest.fixture(scope="session")
def pbd_datasets():
    return {k: generate_synthetic_dataset(s) for k, s in PBD_SPECS.items()}


@pytest.fixture(scope="session")
def small_pbd(pbd_datasets):
    return build_pbd(pbd_datasets, seed=PBD_SEED, grids=SINGLE_POINT_GRIDS, jobs=1)
