"""Adversarial attack detection, attack-group classification, and
similarity-driven resilient model selection for multivariate time series.
"""

import os

# Tiny-matrix workloads run faster single-threaded, and pinning the BLAS
# thread count keeps results and timings bit-reproducible across runs.
# Must happen before numpy first loads.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

__version__ = "0.1.0"
