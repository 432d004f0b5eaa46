"""Run configuration shared by the CLI and the pipeline."""

from __future__ import annotations

import os
from dataclasses import dataclass

from .detection import DEFAULT_PERCENTILE, DEFAULT_THRESHOLD

SIMILARITY_METRICS = ("cosine", "dtw", "wasserstein")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    epsilon: float = 0.1
    threshold: float = DEFAULT_THRESHOLD
    percentile: float = DEFAULT_PERCENTILE
    metric: str = "cosine"
    jobs: int = 0  # 0 = all available cores

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if not 0.0 < self.threshold < 0.5:
            raise ValueError("threshold must lie in (0, 0.5)")
        if not 50.0 < self.percentile < 100.0:
            raise ValueError("percentile must lie in (50, 100)")
        if self.metric not in SIMILARITY_METRICS:
            raise ValueError(f"metric must be one of {SIMILARITY_METRICS}")
        if self.jobs < 0:
            raise ValueError("jobs must be >= 0")

    @property
    def effective_jobs(self) -> int:
        return self.jobs if self.jobs > 0 else (os.cpu_count() or 1)
