"""Adapted integrands whose running integrals blow up at the end of a window.

The generic construction works on any Hoelder path with a small-ball bound:
on each mesh interval it follows ``f_n(X - X(t_{n-1}))`` until the increment
reaches ``n^{-1/(1+eta)}`` (or a deadline passes), then decays linearly to
zero.  The explicit oscillators for fBm and mixed fBm are deterministic
integrands ``(1-s)^{-H}`` and ``(1-s)^{-1/2}``.

Every integral in this module is a left-point sum on the path grid, which is
the Ito sum for a Wiener integrator and converges to the pathwise integral
for fBm with ``H > 1/2``.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import zeta

from .paths import SamplePath, TimeGrid

__all__ = [
    "Mesh",
    "DivergerState",
    "DivergerTrace",
    "IntegrandPath",
    "build_mesh",
    "smoothed_abs",
    "phi_diverger",
    "fbm_oscillator",
    "fbm_oscillator_blocks",
    "autocovariance_r",
    "mixed_oscillator",
    "deterministic_integral",
]

#: Mesh intervals shorter than this many grid steps end the usable horizon.
MIN_RESOLVED_STEPS = 2


@dataclass(frozen=True)
class Mesh:
    """``t_n = K sum_{k<=n} (k^{-gamma} + k^{-mu})`` and ``t'_n = t_{n-1} + Delta_n``."""

    gamma: float
    mu: float
    K: float
    t_n: np.ndarray
    t_prime_n: np.ndarray
    delta_n: np.ndarray
    delta_tilde_n: np.ndarray

    @property
    def horizon(self) -> int:
        return self.t_n.size

    @property
    def t_prev(self) -> np.ndarray:
        """``t_{n-1}`` for ``n = 1..horizon``."""
        return np.concatenate(([0.0], self.t_n[:-1]))

    @property
    def tail_mass(self) -> float:
        """Part of the unit interval not covered by the realized intervals."""
        return float(1.0 - self.t_n[-1])


def build_mesh(gamma: float, mu: float, horizon: int) -> Mesh:
    if not (gamma > 1.0 and mu > 1.0):
        raise ValueError(f"mesh exponents must exceed 1 for summability, got gamma={gamma}, mu={mu}")
    if horizon < 1:
        raise ValueError("horizon must be positive")
    K = 1.0 / (zeta(gamma, 1) + zeta(mu, 1))
    k = np.arange(1, horizon + 1, dtype=float)
    delta = K * k**-gamma
    delta_t = K * k**-mu
    t = np.cumsum(delta + delta_t)
    t_prev = np.concatenate(([0.0], t[:-1]))
    return Mesh(float(gamma), float(mu), float(K), t, t_prev + delta, delta, delta_t)


@dataclass(frozen=True)
class DivergerState:
    """Exponents of the generic construction.

    ``level_scale`` divides the normalized path: the construction is applied to
    ``(X - X(u)) / (level_scale * L^alpha)`` on a window of length ``L`` and the
    integrand is rescaled so its running integral against ``X`` is unchanged.
    """

    gamma: float
    eta: float
    mu: float
    alpha: float
    level_scale: float = 1.0

    def __post_init__(self):
        a = self.alpha
        if not (0.5 < a < 1.0):
            raise ValueError(f"alpha must lie in (1/2, 1), got {a}")
        if not (1.0 < self.gamma < 1.0 / a):
            raise ValueError(f"gamma must lie in (1, 1/alpha) = (1, {1 / a:.6g}), got {self.gamma}")
        eta_max = 1.0 / (self.gamma * a) - 1.0
        if not (0.0 < self.eta < eta_max):
            raise ValueError(f"eta must lie in (0, 1/(gamma alpha) - 1) = (0, {eta_max:.6g}), got {self.eta}")
        mu_min = 1.0 / (a * (1.0 + self.eta))
        if not self.mu > mu_min:
            raise ValueError(f"mu must exceed 1/(alpha (1 + eta)) = {mu_min:.6g}, got {self.mu}")
        if not self.level_scale > 0.0:
            raise ValueError("level_scale must be positive")

    def threshold(self, n) -> np.ndarray:
        return np.asarray(n, dtype=float) ** (-1.0 / (1.0 + self.eta))

    def epsilon(self, n) -> np.ndarray:
        return 1.0 / np.asarray(n, dtype=float)


def smoothed_abs(n: float, x, eta: float = 0.0):
    """``g_n(x) = sqrt(x^2 + n^{-2}) - 1/n`` and ``f_n = d/dx g_n^{1+eta}``.

    ``n`` may be any positive real, so ``smoothed_abs(1/eps, x)`` gives the
    smoothing at level ``eps``.  With ``eta = 0`` the second value is ``g_n'``.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    x = np.asarray(x, dtype=float)
    e = 1.0 / n
    r = np.hypot(x, e)
    # sqrt(x^2 + e^2) - e written without cancellation
    g = x * x / (r + e)
    fp = (1.0 + eta) * g**eta * x / r
    if x.ndim == 0:
        return float(g), float(fp)
    return g, fp


@dataclass
class DivergerTrace:
    """Per-segment record of one generic construction."""

    threshold: np.ndarray
    tau: np.ndarray
    tau_index: np.ndarray
    overshoot: np.ndarray
    hit: np.ndarray
    excursion_integral: np.ndarray
    runoff_integral: np.ndarray
    increment: np.ndarray
    horizon_used: int
    truncated: bool
    tail_mass: float
    level: float | None = None
    stopped: bool = False
    stop_time: float | None = None
    stop_index: int | None = None
    attained: float = 0.0

    @property
    def event_A(self) -> np.ndarray:
        """Small-ball events: the increment stayed below the threshold until the deadline."""
        return ~self.hit

    def lower_bound(self, eta: float) -> np.ndarray:
        """Running lower bound ``2^{-eta} sum |incr|^{1+eta} - sum k^{-1-eta} + sum run-offs``."""
        k = np.arange(1, self.increment.size + 1, dtype=float)
        return np.cumsum(
            2.0**-eta * np.abs(self.increment) ** (1 + eta) - k ** (-1 - eta) + self.runoff_integral
        )


@dataclass
class IntegrandPath:
    """Adapted integrand on a grid.

    ``psi`` holds node values.  ``coef[i]`` multiplies the increment over cell
    ``i``; it equals ``psi[i]`` except in a cell where a running level is hit,
    where only the fraction of the cell up to the crossing is kept.
    """

    grid: TimeGrid
    psi: np.ndarray
    coef: np.ndarray
    segment_index: np.ndarray
    case_tag: np.ndarray
    trace: object = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def zeros(cls, grid: TimeGrid) -> "IntegrandPath":
        n = grid.n_points
        return cls(grid, np.zeros(n), np.zeros(n - 1), np.full(n, -1), np.full(n, "", dtype=object))

    def running_integral(self, values) -> np.ndarray:
        """``y(t_i) = sum_{j<i} coef[j] (X(t_{j+1}) - X(t_j))``, with ``y(t_0) = 0``."""
        x = values.values if isinstance(values, SamplePath) else np.asarray(values)
        y = np.zeros(self.grid.n_points)
        np.cumsum(self.coef * np.diff(x), out=y[1:])
        return y

    def scaled(self, c: float) -> "IntegrandPath":
        return IntegrandPath(self.grid, c * self.psi, c * self.coef, self.segment_index.copy(),
                             self.case_tag.copy(), self.trace, dict(self.meta))

    def to_csv(self, file) -> None:
        with open(file, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "psi", "segment_index", "case_tag"])
            for t, p, s, c in zip(self.grid.times, self.psi, self.segment_index, self.case_tag):
                w.writerow([repr(float(t)), repr(float(p)), int(s), c])


def _window_indices(grid: TimeGrid, window) -> tuple[int, int, float, float]:
    u, w = (grid.t_start, grid.t_end) if window is None else window
    if u < grid.t_start - 1e-12 or w > grid.t_end + 1e-12 or not u < w:
        raise ValueError(f"window {window} not inside the path span")
    i0 = grid.index_at_or_after(u)
    i1 = min(grid.n_points - 1, grid.index_at_or_after(w - 1e-12 * max(1.0, w)))
    return i0, i1, float(u), float(w - u)


def _first_crossing(coef: np.ndarray, dx: np.ndarray, y0: float, level: float, lo: int, hi: int):
    """First cell ``j`` in ``[lo, hi)`` where ``y`` reaches ``level`` and the fraction of it used."""
    inc = coef[lo:hi] * dx[lo:hi]
    y = y0 + np.concatenate(([0.0], np.cumsum(inc)))
    above = np.nonzero(y[1:] >= level)[0]
    if above.size == 0:
        return None, float(y.max())
    j = int(above[0])
    theta = (level - y[j]) / inc[j] if inc[j] != 0.0 else 1.0
    return lo + j, float(min(max(theta, 0.0), 1.0))


def phi_diverger(path: SamplePath, params: DivergerState, mesh: Mesh, window=None,
                 level: float | None = None, runoff: float | None = None,
                 min_steps: int = MIN_RESOLVED_STEPS) -> IntegrandPath:
    """Generic divergent integrand on ``window = (u, w)`` (default: the path span).

    The mesh is mapped affinely onto the window.  Stopping times are the first
    grid point at which the normalized increment reaches the threshold, or the
    grid point at or after the deadline ``t'_n``.  Mesh intervals shorter than
    ``min_steps`` grid steps end the horizon (``trace.truncated``).

    With ``level`` set, the integrand is cut exactly where the running integral
    first reaches ``level``; after the cut it is zero, or decays linearly to
    zero over ``runoff`` time units when ``runoff`` is given.
    """
    grid = path.grid
    x = path.values
    h = grid.step
    i0, i_end, u, L = _window_indices(grid, window)
    scale = params.level_scale * L**params.alpha
    xn = (x - x[i0]) / scale
    dx = np.diff(x)

    n_pts = grid.n_points
    psi = np.zeros(n_pts)
    coef = np.zeros(n_pts - 1)
    seg = np.full(n_pts, -1)
    tag = np.full(n_pts, "", dtype=object)

    t_prev = u + L * mesh.t_prev
    t_prime = u + L * mesh.t_prime_n
    t_next = u + L * mesh.t_n
    rec = {k: [] for k in ("thr", "tau", "tau_i", "over", "hit", "exc", "run", "inc")}
    truncated = False
    for n in range(1, mesh.horizon + 1):
        if L * min(mesh.delta_n[n - 1], mesh.delta_tilde_n[n - 1]) < min_steps * h:
            truncated = True
            break
        a = grid.index_at_or_after(t_prev[n - 1])
        p = min(grid.index_at_or_after(t_prime[n - 1]), i_end)
        e = min(grid.index_at_or_after(t_next[n - 1]), i_end)
        if p <= a or e <= p:
            truncated = True
            break
        thr = float(params.threshold(n))
        d = xn[a:p + 1] - xn[a]
        crossed = np.nonzero(np.abs(d) >= thr)[0]
        hit = crossed.size > 0
        k = a + (int(crossed[0]) if hit else p - a)
        _, f_vals = smoothed_abs(n, d[: k - a + 1], params.eta)
        psi[a:k + 1] = f_vals / scale
        m = max(1, min(int(round(L * mesh.delta_tilde_n[n - 1] / h)), e - k))
        ramp = psi[k] * (1.0 - np.arange(m + 1) / m)
        psi[k:k + m + 1] = ramp
        coef[a:k + m] = psi[a:k + m]
        seg[a:e] = n
        tag[a:k] = "diverger"
        tag[k:k + m] = "linear"
        rec["thr"].append(thr)
        rec["tau"].append(grid.times[k])
        rec["tau_i"].append(k)
        rec["over"].append(abs(d[k - a]) - thr)
        rec["hit"].append(hit)
        rec["exc"].append(float(np.dot(coef[a:k], dx[a:k])))
        rec["run"].append(float(np.dot(coef[k:k + m], dx[k:k + m])))
        rec["inc"].append(float(d[k - a]))
    if truncated:
        warnings.warn("mesh not resolvable on the grid; horizon truncated", RuntimeWarning,
                      stacklevel=2)

    used = len(rec["thr"])
    tail = 1.0 - (mesh.t_n[used - 1] if used else 0.0)
    trace = DivergerTrace(
        threshold=np.asarray(rec["thr"]), tau=np.asarray(rec["tau"]),
        tau_index=np.asarray(rec["tau_i"], dtype=int), overshoot=np.asarray(rec["over"]),
        hit=np.asarray(rec["hit"], dtype=bool), excursion_integral=np.asarray(rec["exc"]),
        runoff_integral=np.asarray(rec["run"]), increment=np.asarray(rec["inc"]),
        horizon_used=used, truncated=truncated, tail_mass=float(L * tail), level=level,
    )
    out = IntegrandPath(grid, psi, coef, seg, tag, trace)
    if level is not None:
        _cut_at_level(out, dx, i0, i_end, float(level), runoff)
    return out


def _cut_at_level(ip: IntegrandPath, dx: np.ndarray, i0: int, i_end: int, level: float,
                  runoff: float | None) -> None:
    tr: DivergerTrace = ip.trace
    if level < 0:
        raise ValueError("level must be nonnegative")
    if level == 0.0:
        j, theta = i0, 0.0
    else:
        j, theta = _first_crossing(ip.coef, dx, 0.0, level, i0, i_end)
    if j is None:
        tr.attained = theta
        ip.meta["failure"] = "diverger exhausted before reaching the level"
        return
    tr.stopped = True
    tr.stop_time = float(ip.grid.times[j] + theta * ip.grid.step)
    tr.stop_index = j
    tr.attained = level
    start = ip.psi[j]
    ip.coef[j] *= theta
    ip.coef[j + 1:] = 0.0
    ip.psi[j + 1:] = 0.0
    ip.segment_index[j + 1:] = -1
    ip.case_tag[j + 1:] = ""
    if runoff is not None and level > 0.0:
        m = max(1, int(round(runoff / ip.grid.step)))
        m = min(m, ip.grid.n_points - 1 - (j + 1))
        if m >= 1:
            ramp = start * (1.0 - np.arange(m + 1) / m)
            ip.psi[j + 1:j + m + 2] = ramp
            ip.coef[j + 1:j + m + 1] = ramp[:-1]
            ip.case_tag[j + 1:j + m + 1] = "linear"


def deterministic_integral(path: SamplePath, fn, t_max: float) -> np.ndarray:
    """Running left-point integral of a deterministic integrand ``fn(t)`` up to ``t_max``.

    Returns ``y`` on the grid; cells starting at or after ``t_max`` are dropped.
    """
    grid = path.grid
    t = grid.times
    mask = t[:-1] < t_max - 1e-15
    c = np.where(mask, fn(np.where(mask, t[:-1], 0.0)), 0.0)
    y = np.zeros(grid.n_points)
    np.cumsum(c * np.diff(path.values), out=y[1:])
    return y


def _grid_value(path: SamplePath, y: np.ndarray, t: float) -> float:
    if t >= 1.0:
        raise ValueError("t must be smaller than 1")
    return float(y[path.grid.index_at_or_after(t)]) if t > path.grid.t_start else 0.0


def fbm_oscillator(path: SamplePath, t: float, H: float | None = None) -> float:
    """``v(t) = int_0^t (1-s)^{-H} dB^H(s)`` as a left-point sum on the path grid."""
    if t >= 1.0:
        raise ValueError("t must be smaller than 1")
    H = _hurst_of(path) if H is None else H
    y = deterministic_integral(path, lambda s: (1.0 - s) ** -H, t)
    return _grid_value(path, y, t)


def fbm_oscillator_blocks(path: SamplePath, n_max: int, H: float | None = None):
    """Dyadic block increments ``x_n = v(1-2^{-n}) - v(1-2^{-n+1})`` and partial sums ``S_n``."""
    H = _hurst_of(path) if H is None else H
    t_max = 1.0 - 2.0**-n_max
    y = deterministic_integral(path, lambda s: (1.0 - s) ** -H, t_max)
    ends = 1.0 - 2.0 ** -np.arange(0, n_max + 1)
    v = np.array([y[path.grid.index_of(e)] for e in ends])
    return np.diff(v), v[1:]


def _hurst_of(path: SamplePath) -> float:
    tag = path.model_tag
    if tag.startswith("fbm(") or tag.startswith("mixed("):
        return float(tag[tag.index("(") + 1:-1])
    raise ValueError("H not given and not recoverable from the path tag")


def autocovariance_r(k: int, H: float, epsabs: float = 1e-13, epsrel: float = 1e-10) -> float:
    """``r(k) = H(2H-1) int_1^2 int_{2^k}^{2^{k+1}} |z-w|^{2H-2} w^{-H} z^{-H} dw dz``.

    The inner integral is split at ``w = z`` and the algebraic singularity is
    handled by weighted Gauss-Kronrod rules.
    """
    if not (0.5 < H < 1.0):
        raise ValueError(f"H must lie in (1/2, 1), got {H}")
    c, d = 2.0**k, 2.0 ** (k + 1)
    p = 2.0 * H - 2.0

    def inner(z):
        total = 0.0
        if c < z:
            hi = min(z, d)
            if hi == z:
                total += integrate.quad(lambda w: w**-H, c, hi, weight="alg", wvar=(0.0, p),
                                        epsabs=epsabs, epsrel=epsrel, limit=200)[0]
            else:
                total += integrate.quad(lambda w: w**-H * (z - w) ** p, c, hi,
                                        epsabs=epsabs, epsrel=epsrel, limit=200)[0]
        if z < d:
            lo = max(z, c)
            if lo == z:
                total += integrate.quad(lambda w: w**-H, lo, d, weight="alg", wvar=(p, 0.0),
                                        epsabs=epsabs, epsrel=epsrel, limit=200)[0]
            else:
                total += integrate.quad(lambda w: w**-H * (w - z) ** p, lo, d,
                                        epsabs=epsabs, epsrel=epsrel, limit=200)[0]
        return total * z**-H

    brk = [b for b in (c, d) if 1.0 < b < 2.0]
    val = integrate.quad(inner, 1.0, 2.0, points=brk or None, epsabs=epsabs, epsrel=epsrel,
                         limit=200)[0]
    return H * (2.0 * H - 1.0) * val


def mixed_oscillator(W: SamplePath, B: SamplePath, t: float) -> tuple[float, float]:
    """``u(t) = int_0^t (1-s)^{-1/2} dW`` (Ito sum) and ``v(t) = u(t) + int_0^t (1-s)^{-1/2} dB^H``."""
    if t >= 1.0:
        raise ValueError("t must be smaller than 1")
    if W.grid != B.grid:
        raise ValueError("W and B must share the grid")
    f = lambda s: (1.0 - s) ** -0.5
    u = _grid_value(W, deterministic_integral(W, f, t), t)
    vb = _grid_value(B, deterministic_integral(B, f, t), t)
    return u, u + vb
