"""Monte Carlo small-ball probabilities and summability of event probabilities.

The small-ball bound ``P(sup_{s<=u<=s+D} |X(u) - X(s)| <= eps) <= exp(-C D eps^{-1/alpha})``
has an unspecified constant; :func:`estimate_small_ball` reports the largest
``C`` compatible with the point estimate.  :func:`check_event_summability`
is the finite-horizon stand-in for a convergent series of probabilities.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .paths import ProcessModel, TimeGrid

__all__ = [
    "SmallBallQuery",
    "SmallBallEstimate",
    "estimate_small_ball",
    "window_suprema",
    "check_event_summability",
    "event_frequencies",
    "write_event_report",
]

MIN_WINDOW_POINTS = 64


@dataclass(frozen=True)
class SmallBallQuery:
    delta: float
    epsilon: float
    alpha: float
    n_paths: int
    window_start: float = 0.0

    @property
    def in_validity_region(self) -> bool:
        """Whether ``epsilon <= delta^alpha``; outside it the bound is not claimed."""
        return self.epsilon <= self.delta**self.alpha


@dataclass(frozen=True)
class SmallBallEstimate:
    p_hat: float
    stderr: float
    c_fit: float | None
    flagged: bool
    n_paths: int

    def __iter__(self):
        return iter((self.p_hat, self.stderr))


def window_suprema(model: ProcessModel, q: SmallBallQuery, seed: int, n_points: int,
                   batch: int = 2000) -> np.ndarray:
    """``sup_{u <= delta} |X(s+u) - X(s)|`` for ``q.n_paths`` paths on ``n_points`` window points."""
    # Increments are stationary for all three models, so the window is sampled from time 0.
    grid = TimeGrid(0.0, q.delta, n_points)
    out = np.empty(q.n_paths)
    for s in range(0, q.n_paths, batch):
        m = min(batch, q.n_paths - s)
        X = model.sample(grid, seed, m, start=s)
        out[s:s + m] = np.abs(X).max(axis=1)
    return out


def estimate_small_ball(model: ProcessModel, q: SmallBallQuery, seed: int,
                        n_points: int = 257, sup_values: np.ndarray | None = None) -> SmallBallEstimate:
    """Fraction of paths whose increment stays in the ``epsilon`` ball over a window of length ``delta``.

    ``sup_values`` may carry precomputed window suprema, so that several
    radii can share one set of paths.
    """
    if not (0.0 <= q.window_start and q.window_start + q.delta <= 1.0 + 1e-12) or q.delta <= 0:
        raise ValueError("small-ball window must lie inside [0, 1]")
    if n_points < MIN_WINDOW_POINTS:
        raise ValueError(f"need at least {MIN_WINDOW_POINTS} grid points in the window")
    sup = window_suprema(model, q, seed, n_points) if sup_values is None else sup_values
    n = sup.size
    p = float(np.mean(sup <= q.epsilon))
    se = float(np.sqrt(p * (1.0 - p) / n))
    c = None
    if 0.0 < p < 1.0:
        c = float(-np.log(p) / (q.delta * q.epsilon ** (-1.0 / q.alpha)))
    return SmallBallEstimate(p, se, c, not q.in_validity_region, n)


def check_event_summability(probabilities, tol: float = 0.01):
    """Partial sums and a plateau flag: the last-quartile increment is at most ``tol`` of the total."""
    p = np.asarray(probabilities, dtype=float)
    if np.any((p < 0.0) | (p > 1.0)):
        raise ValueError("probabilities must lie in [0, 1]")
    s = np.cumsum(p)
    if s.size == 0:
        return s, True
    q = int(np.floor(0.75 * s.size))
    before = s[q - 1] if q >= 1 else 0.0
    total = s[-1]
    return s, bool(total - before <= tol * total)


def event_frequencies(events: np.ndarray):
    """Per-index empirical probabilities and binomial standard errors; rows are paths."""
    e = np.asarray(events, dtype=float)
    p = e.mean(axis=0)
    return p, np.sqrt(p * (1.0 - p) / e.shape[0])


def write_event_report(file, p_hat, stderr) -> None:
    """CSV with columns ``n, p_hat, stderr, partial_sum, flag`` (flag is the overall plateau flag)."""
    sums, plateau = check_event_summability(p_hat)
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "p_hat", "stderr", "partial_sum", "flag"])
        for i, (p, se, s) in enumerate(zip(p_hat, stderr, sums), start=1):
            w.writerow([i, repr(float(p)), repr(float(se)), repr(float(s)), int(plateau)])
