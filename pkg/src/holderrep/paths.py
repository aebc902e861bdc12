"""Wiener, fractional Brownian and mixed fractional Brownian paths on uniform grids.

All samplers are exact in distribution on the grid.  Randomness comes from a
counter-based generator (Philox) keyed by ``(seed, stream, path_index)``, so a
path is reproducible regardless of how many other paths were drawn before it
or in which order.
"""
from __future__ import annotations

import csv
import functools
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

__all__ = [
    "CHOLESKY_MAX_STEPS",
    "TimeGrid",
    "SamplePath",
    "HolderEstimate",
    "path_rng",
    "fgn_autocovariance",
    "fbm_covariance",
    "simulate_fbm",
    "simulate_fbm_paths",
    "simulate_wiener",
    "simulate_wiener_paths",
    "simulate_mixed",
    "ProcessModel",
    "estimate_holder",
    "save_path_csv",
    "load_path_csv",
    "save_bundle",
    "load_bundle",
]

#: Largest number of grid steps sampled by the dense Cholesky factorization.
CHOLESKY_MAX_STEPS = 2**12

STREAM_FBM = 0
STREAM_WIENER = 1
STREAM_AUX = 2


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_start = t_0 < ... < t_{n-1} = t_end`` inside [0, 1]."""

    t_start: float
    t_end: float
    n_points: int
    times: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (0.0 <= self.t_start < self.t_end <= 1.0):
            raise ValueError(
                f"grid must satisfy 0 <= t_start < t_end <= 1, got [{self.t_start}, {self.t_end}]"
            )
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ValueError(f"n_points must be an integer >= 2, got {self.n_points}")
        times = np.linspace(self.t_start, self.t_end, int(self.n_points))
        times.setflags(write=False)
        object.__setattr__(self, "n_points", int(self.n_points))
        object.__setattr__(self, "times", times)

    @classmethod
    def unit(cls, n_steps: int) -> "TimeGrid":
        """Grid on [0, 1] with ``n_steps`` equal cells (``n_steps + 1`` points)."""
        return cls(0.0, 1.0, n_steps + 1)

    @classmethod
    def from_times(cls, times) -> "TimeGrid":
        times = np.asarray(times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("need at least two time points")
        steps = np.diff(times)
        if np.any(steps <= 0):
            raise ValueError("times must be strictly increasing")
        h = (times[-1] - times[0]) / (times.size - 1)
        if np.max(np.abs(steps - h)) > 1e-12 * max(h, 1e-300) * times.size:
            raise ValueError("non-uniform grids are not supported")
        return cls(float(times[0]), float(times[-1]), times.size)

    @property
    def step(self) -> float:
        return (self.t_end - self.t_start) / (self.n_points - 1)

    @property
    def n_steps(self) -> int:
        return self.n_points - 1

    def index_at_or_after(self, t: float) -> int:
        """Index of the first grid point ``>= t`` (mesh points are snapped upwards).

        Times within 1e-9 steps above a grid point snap to that point, so
        rounded mesh times such as ``1 - 2**-n`` land where intended.
        """
        k = int(np.ceil((t - self.t_start) / self.step - 1e-9))
        return min(max(k, 0), self.n_points - 1)

    def index_of(self, t: float) -> int:
        """Index of the grid point equal to ``t``; raises when ``t`` is off-grid."""
        k = int(round((t - self.t_start) / self.step))
        if k < 0 or k >= self.n_points or abs(self.t_start + k * self.step - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not a grid point")
        return k

    def subgrid(self, i0: int, i1: int) -> "TimeGrid":
        """Grid made of the points with indices ``i0..i1`` inclusive."""
        return TimeGrid(float(self.times[i0]), float(self.times[i1]), i1 - i0 + 1)


@dataclass(frozen=True)
class SamplePath:
    grid: TimeGrid
    values: np.ndarray
    model_tag: str = "unknown"
    seed: int = 0
    path_index: int = 0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.n_points,):
            raise ValueError(
                f"values has shape {values.shape}, grid has {self.grid.n_points} points"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def __len__(self):
        return self.grid.n_points

    def with_values(self, values, model_tag=None) -> "SamplePath":
        return SamplePath(self.grid, values, model_tag or self.model_tag, self.seed, self.path_index)


@dataclass(frozen=True)
class HolderEstimate:
    alpha: float
    c_hat: float
    window: tuple[float, float]


def path_rng(seed: int, path_index: int = 0, stream: int = STREAM_FBM) -> np.random.Generator:
    """Counter-based generator for one path; independent across (seed, stream, index)."""
    if seed < 0 or path_index < 0:
        raise ValueError("seed and path_index must be non-negative")
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(stream), int(path_index)])
    return np.random.Generator(np.random.Philox(ss))


def _check_hurst(H):
    if not (0.5 < H < 1.0):
        raise ValueError(f"Hurst index must lie in (1/2, 1), got {H}")


def fgn_autocovariance(H: float, n: int) -> np.ndarray:
    """Autocovariance of unit-step fractional Gaussian noise at lags 0..n-1."""
    k = np.arange(n, dtype=float)
    return 0.5 * ((k + 1) ** (2 * H) - 2 * k ** (2 * H) + np.abs(k - 1) ** (2 * H))


def fbm_covariance(H: float, s, t):
    """``E[B^H(s) B^H(t)] = (s^{2H} + t^{2H} - |t-s|^{2H}) / 2``."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    return 0.5 * (np.abs(s) ** (2 * H) + np.abs(t) ** (2 * H) - np.abs(t - s) ** (2 * H))


@functools.lru_cache(maxsize=4)
def _fgn_cholesky(H: float, n: int) -> np.ndarray:
    cov = linalg.toeplitz(fgn_autocovariance(H, n))
    return linalg.cholesky(cov, lower=True)


@functools.lru_cache(maxsize=4)
def _fgn_circulant_sqrt_eigs(H: float, n: int) -> np.ndarray:
    # Davies-Harte embedding of the n x n fGn Toeplitz matrix into a circulant of size 2n.
    r = fgn_autocovariance(H, n + 1)
    row = np.concatenate([r, r[-2:0:-1]])
    lam = np.fft.fft(row).real
    if lam.min() < -1e-10 * lam.max():
        raise np.linalg.LinAlgError(
            f"circulant embedding is not non-negative definite (min eigenvalue {lam.min():.3e})"
        )
    return np.sqrt(np.clip(lam, 0.0, None) / row.size)


#: Rows per matrix product; fixed so BLAS rounding never depends on the batch size.
MATMUL_BLOCK = 64


def _blocked_matmul(z: np.ndarray, m: np.ndarray) -> np.ndarray:
    out = np.empty((z.shape[0], m.shape[1]))
    buf = np.zeros((MATMUL_BLOCK, z.shape[1]))
    for i in range(0, z.shape[0], MATMUL_BLOCK):
        k = min(MATMUL_BLOCK, z.shape[0] - i)
        buf[:k] = z[i:i + k]
        buf[k:] = 0.0
        out[i:i + k] = (buf @ m)[:k]
    return out


def _fgn_unit(H: float, n: int, rngs, method: str) -> np.ndarray:
    """Unit-step fGn increments, one row per generator in ``rngs``."""
    if method == "auto":
        method = "cholesky" if n <= CHOLESKY_MAX_STEPS else "circulant"
    if method == "cholesky":
        if n > CHOLESKY_MAX_STEPS:
            raise ValueError(
                f"exact factorization is limited to {CHOLESKY_MAX_STEPS} steps, got {n}; "
                "use method='circulant'"
            )
        L = _fgn_cholesky(float(H), n)
        z = np.stack([rng.standard_normal(n) for rng in rngs])
        return _blocked_matmul(z, L.T)
    if method == "circulant":
        sq = _fgn_circulant_sqrt_eigs(float(H), n)
        m = sq.size
        out = np.empty((len(rngs), n))
        for i, rng in enumerate(rngs):
            z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
            out[i] = np.fft.fft(sq * z).real[:n]
        return out
    raise ValueError(f"unknown fBm method {method!r}")


def simulate_fbm_paths(H: float, grid: TimeGrid, seed: int, n_paths: int, start: int = 0,
                       method: str = "auto") -> np.ndarray:
    """fBm values for path indices ``start .. start + n_paths - 1``; shape (n_paths, n_points).

    The process starts at 0 at time 0; when ``grid.t_start > 0`` the returned rows
    are the values at the grid times of a path started at 0 (the segment
    ``[0, t_start]`` is bridged by a single exact Gaussian step).
    """
    _check_hurst(H)
    rngs = [path_rng(seed, start + i, STREAM_FBM) for i in range(n_paths)]
    if grid.t_start == 0.0:
        n = grid.n_steps
        inc = _fgn_unit(H, n, rngs, method) * grid.step**H
        out = np.zeros((n_paths, grid.n_points))
        np.cumsum(inc, axis=1, out=out[:, 1:])
        return out
    # Exact joint law on {0, t_start, ..., t_end}: condition-free dense sampling.
    times = grid.times
    if grid.n_points > CHOLESKY_MAX_STEPS:
        raise ValueError("grids not starting at 0 are limited to the dense sampler")
    cov = fbm_covariance(H, times[:, None], times[None, :])
    L = linalg.cholesky(cov, lower=True)
    z = np.stack([rng.standard_normal(grid.n_points) for rng in rngs])
    return _blocked_matmul(z, L.T)


def simulate_fbm(H: float, grid: TimeGrid, seed: int, path_index: int = 0,
                 method: str = "auto") -> SamplePath:
    """One fBm path with covariance ``(s^{2H} + t^{2H} - |t-s|^{2H}) / 2``.

    Paths with up to :data:`CHOLESKY_MAX_STEPS` steps are drawn through the
    Cholesky factor of the increment covariance, longer ones by circulant
    embedding.  Both are exact on the grid.
    """
    values = simulate_fbm_paths(H, grid, seed, 1, start=path_index, method=method)[0]
    return SamplePath(grid, values, f"fbm({H:g})", seed, path_index)


def simulate_wiener_paths(grid: TimeGrid, seed: int, n_paths: int, start: int = 0) -> np.ndarray:
    out = np.zeros((n_paths, grid.n_points))
    sd = np.sqrt(grid.step)
    for i in range(n_paths):
        rng = path_rng(seed, start + i, STREAM_WIENER)
        out[i, 0] = rng.standard_normal() * np.sqrt(grid.t_start)
        out[i, 1:] = out[i, 0] + np.cumsum(rng.standard_normal(grid.n_steps) * sd)
    return out


def simulate_wiener(grid: TimeGrid, seed: int, path_index: int = 0) -> SamplePath:
    values = simulate_wiener_paths(grid, seed, 1, start=path_index)[0]
    return SamplePath(grid, values, "wiener", seed, path_index)


def simulate_mixed(H: float, grid: TimeGrid, seed: int, path_index: int = 0,
                   method: str = "auto"):
    """Return ``(W, B, X)`` with ``X = W + B``; W and B^H are independent."""
    W = simulate_wiener(grid, seed, path_index)
    B = simulate_fbm(H, grid, seed, path_index, method=method)
    X = SamplePath(grid, W.values + B.values, f"mixed({H:g})", seed, path_index)
    return W, B, X


@dataclass(frozen=True)
class ProcessModel:
    """One of ``wiener``, ``fbm`` or ``mixed`` (``W + B^H`` with independent parts)."""

    kind: str
    H: float | None = None

    def __post_init__(self):
        if self.kind not in ("wiener", "fbm", "mixed"):
            raise ValueError(f"unknown model {self.kind!r}")
        if self.kind != "wiener":
            _check_hurst(self.H)

    @property
    def tag(self) -> str:
        return "wiener" if self.kind == "wiener" else f"{self.kind}({self.H:g})"

    def covariance(self, s, t):
        s, t = np.asarray(s, dtype=float), np.asarray(t, dtype=float)
        out = np.zeros(np.broadcast(s, t).shape)
        if self.kind != "fbm":
            out = out + np.minimum(s, t)
        if self.kind != "wiener":
            out = out + fbm_covariance(self.H, s, t)
        return out

    def sample_components(self, grid: TimeGrid, seed: int, n_paths: int, start: int = 0):
        """``(W, B)`` arrays; the absent component is ``None``."""
        W = simulate_wiener_paths(grid, seed, n_paths, start) if self.kind != "fbm" else None
        B = simulate_fbm_paths(self.H, grid, seed, n_paths, start) if self.kind != "wiener" else None
        return W, B

    def sample(self, grid: TimeGrid, seed: int, n_paths: int, start: int = 0) -> np.ndarray:
        W, B = self.sample_components(grid, seed, n_paths, start)
        if W is None:
            return B
        return W if B is None else W + B


def estimate_holder(path: SamplePath, alpha: float, window=None) -> HolderEstimate:
    """Largest ``|X(t) - X(s)| / (t - s)^alpha`` over grid pairs inside ``window``."""
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    grid = path.grid
    lo, hi = (grid.t_start, grid.t_end) if window is None else window
    if lo < grid.t_start - 1e-12 or hi > grid.t_end + 1e-12:
        raise ValueError("window not contained in the grid span")
    i0 = grid.index_at_or_after(lo)
    i1 = int(np.floor((hi - grid.t_start) / grid.step + 1e-9))
    if i1 <= i0:
        raise ValueError("window contains fewer than two grid points")
    x = path.values[i0:i1 + 1]
    h = grid.step
    best = 0.0
    for lag in range(1, x.size):
        d = np.abs(x[lag:] - x[:-lag]).max()
        r = d / (lag * h) ** alpha
        if r > best:
            best = r
    return HolderEstimate(alpha, float(best), (float(grid.times[i0]), float(grid.times[i1])))


def save_path_csv(path: SamplePath, file) -> None:
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "value"])
        for t, v in zip(path.times, path.values):
            w.writerow([repr(float(t)), repr(float(v))])


def load_path_csv(file, model_tag: str = "imported", seed: int = 0) -> SamplePath:
    data = np.loadtxt(file, delimiter=",", skiprows=1, ndmin=2)
    grid = TimeGrid.from_times(data[:, 0])
    return SamplePath(grid, data[:, 1], model_tag, seed)


def save_bundle(file, paths: dict) -> None:
    """Write named arrays (or SamplePaths) into one ``.npz`` run bundle."""
    arrays = {}
    for name, p in paths.items():
        if isinstance(p, SamplePath):
            arrays[f"{name}__t"] = p.times
            arrays[f"{name}__x"] = p.values
        else:
            arrays[name] = np.asarray(p)
    np.savez(file, **arrays)


def load_bundle(file) -> dict:
    out = {}
    with np.load(file) as data:
        keys = list(data.keys())
        for k in keys:
            if k.endswith("__t"):
                name = k[:-3]
                out[name] = SamplePath(TimeGrid.from_times(data[k]), data[f"{name}__x"], name)
            elif not k.endswith("__x"):
                out[k] = data[k]
    return out
