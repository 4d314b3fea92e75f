"""Summary statistics, histograms and the one-sample Kolmogorov-Smirnov test."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

__all__ = ["KsResult", "summarize", "ks_test", "kolmogorov_sf", "gaussian_cdf", "histogram"]


@dataclass(frozen=True)
class KsResult:
    statistic: float
    n: int
    p_value: float


def summarize(samples):
    """Return ``(mean, unbiased std, n)``; needs at least two samples."""
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if n < 2:
        raise ValueError(f"need at least 2 samples for a standard deviation, got {n}")
    return float(np.mean(x)), float(np.std(x, ddof=1)), n


def kolmogorov_sf(t: float, max_terms: int = 100_000, tol: float = 1e-12) -> float:
    """``P(K > t)`` for the limiting Kolmogorov distribution.

    Uses the alternating series for ``t >= 1`` and the Jacobi-theta dual series
    below, where the alternating one converges too slowly.
    """
    if t <= 0:
        return 1.0
    if t < 1.0:
        total = 0.0
        for k in range(1, max_terms + 1):
            term = math.exp(-((2 * k - 1) ** 2) * math.pi ** 2 / (8.0 * t * t))
            total += term
            if term < tol:
                break
        cdf = math.sqrt(2.0 * math.pi) / t * total
        return min(1.0, max(0.0, 1.0 - cdf))
    total = 0.0
    for k in range(1, max_terms + 1):
        term = math.exp(-2.0 * k * k * t * t)
        total += term if k % 2 else -term
        if term < tol:
            break
    return min(1.0, max(0.0, 2.0 * total))


def ks_test(samples, reference_cdf) -> KsResult:
    """One-sample KS statistic against ``reference_cdf`` with the asymptotic p-value."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise ValueError("ks_test needs at least one sample")
    if not np.all(np.isfinite(x)):
        raise ValueError("ks_test samples must be finite")
    F = np.asarray(reference_cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))
    d = min(1.0, max(0.0, d))
    return KsResult(statistic=d, n=n, p_value=kolmogorov_sf(math.sqrt(n) * d))


def gaussian_cdf(x, mean=0.0, std=1.0):
    """Normal CDF through the complementary error function."""
    if not std > 0:
        raise ValueError("std must be positive")
    z = (np.asarray(x, dtype=float) - mean) / std
    out = 0.5 * erfc(-z / math.sqrt(2.0))
    return out if np.ndim(out) else float(out)


def histogram(samples, bin_count: int = 30):
    """Equal-width bins over [min, max], rightmost bin closed.

    All-equal samples get a single unit-width bin centred on the value.
    """
    if bin_count < 1:
        raise ValueError("bin_count must be >= 1")
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("histogram of empty samples")
    if x.min() == x.max():
        v = float(x[0])
        return np.array([v - 0.5, v + 0.5]), np.array([x.size])
    counts, edges = np.histogram(x, bins=bin_count)
    return edges, counts
