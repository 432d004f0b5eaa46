"""Seed derivation and small shared helpers."""

import hashlib

import numpy as np


def derive_seed(root_seed: int, *parts) -> int:
    """Stable child seed from a root seed and any hashable labels.

    Uses sha256 so the mapping is identical across platforms and runs,
    which the reproducibility contract of every pipeline stage relies on.
    """
    text = ":".join([str(int(root_seed))] + [str(p) for p in parts])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(root_seed: int, *parts) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root_seed, *parts))


def format_float(v: float) -> str:
    """Decimal text with 17 significant digits; round-trips float64 exactly."""
    return f"{float(v):.17g}"
