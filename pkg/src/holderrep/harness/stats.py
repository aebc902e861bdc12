"""Goodness-of-fit statistics used in run summaries."""
from __future__ import annotations

import numpy as np

__all__ = ["ks_statistic", "ks_critical_value"]


def ks_statistic(samples, cdf) -> float:
    """Kolmogorov-Smirnov distance ``sup |F_n - F|`` between the sample and a continuous ``cdf``."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise ValueError("samples must be non-empty")
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def ks_critical_value(n: int, level: float = 0.01) -> float:
    """Asymptotic critical value ``c(level) / sqrt(n)``; ``c(0.01) = 1.628``."""
    c = {0.10: 1.224, 0.05: 1.358, 0.01: 1.628}.get(level)
    if c is None:
        c = float(np.sqrt(-0.5 * np.log(level / 2.0)))
    return c / np.sqrt(n)
