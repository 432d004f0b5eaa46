"""Spectral kernels: radix-2 FFT and orthonormal Haar wavelet decomposition.

Both operate on power-of-two lengths; callers zero-pad first (padding is part
of the feature definition and is applied identically at fit and score time).
"""

from __future__ import annotations

import numpy as np

_SQRT2 = np.sqrt(2.0)


def next_pow2(n: int) -> int:
    if n < 1:
        raise ValueError("length must be positive")
    p = 1
    while p < n:
        p *= 2
    return p


def zero_pad_pow2(x: np.ndarray) -> np.ndarray:
    """Pad the last axis with zeros up to the next power of two."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    p = next_pow2(n)
    if p == n:
        return x
    pad = [(0, 0)] * (x.ndim - 1) + [(0, p - n)]
    return np.pad(x, pad)


def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


def fft(x: np.ndarray) -> np.ndarray:
    """Iterative radix-2 Cooley-Tukey FFT along the last axis.

    Accepts real or complex input whose last-axis length is a power of two.
    """
    a = np.asarray(x)
    n = a.shape[-1]
    if n & (n - 1) or n == 0:
        raise ValueError(f"FFT length must be a power of two, got {n}")
    out = np.asarray(a, dtype=np.complex128)[..., _bit_reverse_indices(n)].copy()
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = out.reshape(*out.shape[:-1], n // size, size)
        even = blocks[..., :half].copy()
        odd = blocks[..., half:] * tw
        blocks[..., :half] = even + odd
        blocks[..., half:] = even - odd
        size *= 2
    return out


def ifft(x: np.ndarray) -> np.ndarray:
    a = np.asarray(x, dtype=np.complex128)
    return np.conj(fft(np.conj(a))) / a.shape[-1]


def power_spectrum(x: np.ndarray) -> np.ndarray:
    """One-sided squared-magnitude spectrum (bins 0..N/2) of a padded signal."""
    spec = fft(zero_pad_pow2(x))
    n = spec.shape[-1]
    return np.abs(spec[..., : n // 2 + 1]) ** 2


def haar_dwt(x: np.ndarray, levels: int):
    """Multilevel orthonormal Haar decomposition along the last axis.

    Returns (details, approx): ``details[i]`` holds the level-(i+1) detail
    coefficients, finest first. Requires length divisible by 2**levels.
    """
    a = np.asarray(x, dtype=np.float64)
    n = a.shape[-1]
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if n % (1 << levels):
        raise ValueError(f"length {n} not divisible by 2^{levels}")
    details = []
    for _ in range(levels):
        even = a[..., 0::2]
        odd = a[..., 1::2]
        details.append((even - odd) / _SQRT2)
        a = (even + odd) / _SQRT2
    return details, a


def haar_idwt(details, approx) -> np.ndarray:
    """Inverse of :func:`haar_dwt`."""
    a = np.asarray(approx, dtype=np.float64)
    for d in reversed(details):
        out = np.empty(a.shape[:-1] + (2 * a.shape[-1],), dtype=np.float64)
        out[..., 0::2] = (a + d) / _SQRT2
        out[..., 1::2] = (a - d) / _SQRT2
        a = out
    return a
