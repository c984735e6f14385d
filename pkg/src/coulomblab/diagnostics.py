"""Batch-means standard errors and integrated autocorrelation times."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ObservableSummary:
    name: str
    estimate: float
    se: float
    tau: float
    n_eff: float
    n: int


def _batches(n: int, n_batches: int | None):
    if n_batches is None:
        size = max(1, int(math.isqrt(n)))
        n_batches = n // size
    else:
        size = n // n_batches
    return n_batches, size


def batch_means(x, n_batches: int | None = None) -> tuple[float, float, float]:
    """(mean, standard error, integrated autocorrelation time) of a chain.

    Batches of size floor(sqrt(n)) by default; a trailing partial batch is
    dropped from the variance estimate but not from the mean.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n == 0:
        return math.nan, math.nan, math.nan
    mean = float(np.mean(x))
    a, b = _batches(n, n_batches)
    if a < 2 or b < 1:
        return mean, math.nan, math.nan
    bm = x[: a * b].reshape(a, b).mean(axis=1)
    var_bm = b * float(np.sum((bm - bm.mean()) ** 2)) / (a - 1)
    se = math.sqrt(var_bm / n)
    var = float(np.var(x, ddof=1)) if n > 1 else 0.0
    tau = var_bm / var if var > 0 else 1.0
    return mean, se, tau


def batch_means_cov(x, n_batches: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Means and covariance matrix of the mean for a vector-valued chain (n, k)."""
    x = np.asarray(x, dtype=float)
    n, k = x.shape
    mean = x.mean(axis=0)
    a, b = _batches(n, n_batches)
    if a < 2:
        return mean, np.full((k, k), math.nan)
    bm = x[: a * b].reshape(a, b, k).mean(axis=1)
    dev = bm - bm.mean(axis=0)
    cov = b * dev.T @ dev / (a - 1) / n
    return mean, cov


def summarize(name: str, x) -> ObservableSummary:
    mean, se, tau = batch_means(x)
    n = len(x)
    n_eff = n / tau if tau and tau > 0 and not math.isnan(tau) else float(n)
    return ObservableSummary(name, mean, se, tau, n_eff, n)


def pooled(summaries) -> tuple[float, float]:
    """Sample-size weighted mean and s.e. over independent chains."""
    summaries = list(summaries)
    total = sum(s.n for s in summaries)
    if total == 0:
        return math.nan, math.nan
    mean = sum(s.n * s.estimate for s in summaries) / total
    var = sum((s.n / total) ** 2 * s.se ** 2 for s in summaries)
    return mean, math.sqrt(var)


def energy_trace_slope(energies) -> float:
    """Least-squares slope of the energy trace per recorded sample."""
    e = np.asarray(energies, dtype=float)
    if len(e) < 2:
        return 0.0
    t = np.arange(len(e), dtype=float)
    return float(np.polyfit(t, e, 1)[0])


def split_chain_gap(x) -> float:
    """Difference of the first- and second-half means in units of their joint s.e."""
    x = np.asarray(x, dtype=float)
    h = len(x) // 2
    if h < 4:
        return math.nan
    m1, s1, _ = batch_means(x[:h])
    m2, s2, _ = batch_means(x[h:2 * h])
    denom = math.hypot(s1, s2)
    return abs(m1 - m2) / denom if denom > 0 else 0.0
