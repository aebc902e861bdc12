"""Adapted integrands that replicate a distribution or a random variable.

* :func:`replicate_distribution` stops a divergent integrand when its running
  integral reaches ``|g(X(v))|`` with ``g = F^{-1} o F_{X(v)}``.
* :func:`replicate_variable_improper` chains divergent integrands over
  ``[t_n, t_{n+1}]`` so that ``y(t_{n+1}) = z(t_n)`` with
  ``z(t) = tan E[arctan xi | F_t]``.
* :func:`replicate_proper` tracks a Hoelder target process ``z`` with a
  smoothed chain-rule integrand (case A) and falls back on a stopped
  divergent integrand (case B) when the previous segment ran out of time.
* :func:`replicate_mixed` uses ``(t_{n+1} - t)^{-1/2}`` on dyadic blocks and
  stops when the Wiener part of the integral reaches the target.

Running integrals are left-point sums on the path grid.  When a running
level is hit inside a cell, the cell coefficient keeps only the fraction of
the cell before the crossing, so the level is attained exactly for the
piecewise-linear path.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .diverger import (DivergerState, IntegrandPath, Mesh, build_mesh, phi_diverger,
                       smoothed_abs)
from .paths import ProcessModel, SamplePath, TimeGrid
from .stieltjes import GridFunction, beta_norm

__all__ = [
    "ParameterSet",
    "ProperMesh",
    "ReplicationResult",
    "choose_parameters",
    "proper_mesh",
    "replicate_distribution",
    "replicate_variable_improper",
    "replicate_proper",
    "replicate_mixed",
    "ConstantTarget",
    "PointTarget",
    "LinearTarget",
    "DELTA_LADDER",
    "ARCTAN_CLAMP",
]

DELTA_LADDER = tuple(m * 10.0**-e for e in range(2, 7) for m in (5.0, 2.0, 1.0))
#: ``|E[arctan xi | F_t]|`` is clamped to ``pi/2 - ARCTAN_CLAMP`` before ``tan``.
ARCTAN_CLAMP = 1e-6
_GH_X, _GH_W = np.polynomial.hermite.hermgauss(64)


# ---------------------------------------------------------------- parameters

@dataclass(frozen=True)
class ParameterSet:
    """Exponents of the proper representation.

    ``a_n = Delta_n^{-mu}``, ``Delta~_n = Delta_n^gamma`` and ``eps_n = Delta_n^kappa``;
    ``eps`` and ``eps_hat`` are the slack terms of the Hoelder and small-ball
    estimates.
    """

    alpha: float
    a: float
    beta: float
    mu: float
    kappa: float
    gamma: float
    eps: float
    eps_hat: float
    delta_margin: float

    def constraint_values(self) -> dict[str, float]:
        al, e, eh = self.alpha, self.eps, self.eps_hat
        return {
            "(1)": self.mu + self.a - eh - al,
            "(2)": self.kappa - eh - al,
            "(3)": self.gamma * (al - e) - eh - al,
            "(4)": 1.0 - self.beta - self.mu,
            "(5)": 2.0 - self.beta - self.kappa,
            "(6)": 1.0 + al - e - self.beta - self.mu - self.kappa,
        }

    def violations(self, margin: float = 0.0) -> list[str]:
        out = []
        if not self.a < self.alpha:
            out.append(f"a < alpha violated (a={self.a:g}, alpha={self.alpha:g})")
        lo, hi = 1.0 - self.alpha, 1.0 - self.alpha + self.a
        if not lo < self.beta < hi:
            out.append(f"beta in (1-alpha, 1-alpha+a) = ({lo:g}, {hi:g}) violated (beta={self.beta:g})")
        for name, v in self.constraint_values().items():
            if margin > 0.0 and not v >= margin:
                out.append(f"constraint {name} margin {v:.6g} < {margin:g}")
            elif margin == 0.0 and not v > 0.0:
                out.append(f"constraint {name} <= 0 (value {v:.6g})")
        return out

    def validate(self, margin: float = 0.0) -> "ParameterSet":
        v = self.violations(margin)
        if v:
            raise ValueError("; ".join(v))
        return self


def _defaults(alpha: float, a: float, delta: float, eps, eps_hat) -> dict:
    return dict(
        beta=1.0 - alpha + a / 2.0,
        mu=alpha - a + delta,
        kappa=alpha + delta,
        # 1 + 2 delta / alpha keeps constraint (3) at least delta / 2 above zero
        gamma=1.0 + 2.0 * delta / alpha,
        eps=delta / 4.0 if eps is None else eps,
        eps_hat=delta / 4.0 if eps_hat is None else eps_hat,
    )


def choose_parameters(alpha: float, a: float, margins: dict | None = None,
                      **overrides) -> ParameterSet:
    """Exponents satisfying the six constraints.

    Without an explicit ``margins['delta']`` the largest ``delta`` of
    :data:`DELTA_LADDER` is chosen for which every constraint exceeds
    ``delta / 2``.  ``overrides`` replace individual exponents; the result is
    then only required to satisfy the constraints strictly.
    """
    if not (0.5 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (1/2, 1), got {alpha}")
    if not a > 0.0:
        raise ValueError(f"a must be positive, got {a}")
    if not a < alpha:
        raise ValueError(f"a < alpha violated (a={a:g}, alpha={alpha:g})")
    margins = dict(margins or {})
    eps, eps_hat = margins.get("eps"), margins.get("eps_hat")
    unknown = set(overrides) - {"beta", "mu", "kappa", "gamma", "eps", "eps_hat"}
    if unknown:
        raise TypeError(f"unknown parameter overrides {sorted(unknown)}")
    if "delta" in margins or overrides:
        delta = float(margins.get("delta", DELTA_LADDER[0]))
        kw = _defaults(alpha, a, delta, eps, eps_hat)
        kw.update(overrides)
        return ParameterSet(alpha, a, delta_margin=delta, **kw).validate()
    for delta in DELTA_LADDER:
        p = ParameterSet(alpha, a, delta_margin=delta, **_defaults(alpha, a, delta, eps, eps_hat))
        if not p.violations(margin=delta / 2.0):
            return p
    raise ValueError(f"no delta in the ladder satisfies the constraints for alpha={alpha}, a={a}")


@dataclass(frozen=True)
class ProperMesh:
    """``t_n = sum_{k<=n} Delta_k`` with the deadline ``t'_n = t_{n-1} + Delta_n / 2``.

    Arrays are indexed by ``n - 1``; ``t`` holds ``t_0 = 0, ..., t_N``.
    """

    t: np.ndarray
    delta: np.ndarray
    t_prime: np.ndarray
    delta_tilde: np.ndarray
    a_n: np.ndarray
    eps_n: np.ndarray

    @property
    def horizon(self) -> int:
        return self.delta.size


def proper_mesh(params: ParameterSet, horizon: int, schedule: str = "dyadic",
                nu: float = 2.0) -> ProperMesh:
    """``Delta_n = K 2^{-n}`` (``schedule='dyadic'``) or ``K n^{-nu}`` (``'power'``), normalized to sum 1.

    The run-off length is ``min(Delta_n^gamma, Delta_n / 2)`` so that it ends
    before ``t_n`` even while ``Delta_n^gamma > Delta_n / 2``.
    """
    n = np.arange(1, horizon + 1, dtype=float)
    if schedule == "dyadic":
        delta = 2.0**-n
    elif schedule == "power":
        from scipy.special import zeta
        delta = n**-nu / zeta(nu, 1)
    else:
        raise ValueError(f"unknown schedule {schedule!r}")
    t = np.concatenate(([0.0], np.cumsum(delta)))
    return ProperMesh(
        t=t, delta=delta, t_prime=t[:-1] + delta / 2.0,
        delta_tilde=np.minimum(delta**params.gamma, delta / 2.0),
        a_n=delta**-params.mu, eps_n=delta**params.kappa,
    )


# ------------------------------------------------------------- results

@dataclass
class ReplicationResult:
    """Per-path transcript of a replication run."""

    integrand: IntegrandPath
    y: np.ndarray
    t_mesh: np.ndarray
    tau: np.ndarray
    case: np.ndarray
    xi_n: np.ndarray
    Lambda_n: np.ndarray
    overshoot: np.ndarray
    hit: np.ndarray
    terminal: float
    target: float
    case_B_count: int
    flags: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    @property
    def terminal_error(self) -> float:
        return abs(self.terminal - self.target)

    def to_dict(self) -> dict:
        def lst(a):
            return [x.item() if hasattr(x, "item") else x for x in np.asarray(a).tolist()] \
                if isinstance(a, np.ndarray) else a
        extras = {k: lst(v) if isinstance(v, np.ndarray) else v for k, v in self.extras.items()}
        return {
            "t_mesh": lst(self.t_mesh), "tau": lst(self.tau), "case": lst(self.case),
            "xi_n": lst(self.xi_n), "Lambda_n": lst(self.Lambda_n),
            "overshoot": lst(self.overshoot), "hit": lst(self.hit),
            "terminal": self.terminal, "target": self.target,
            "terminal_error": self.terminal_error, "case_B_count": self.case_B_count,
            "flags": list(self.flags), "extras": extras,
        }


# ------------------------------------------------------------- targets

def _tan_of_mean_arctan(m: np.ndarray, s: float, h) -> np.ndarray:
    """``tan E[arctan h(m + s Z)]`` by 64-point Gauss-Hermite quadrature, with clamping."""
    m = np.asarray(m, dtype=float)
    x = m[..., None] + s * math.sqrt(2.0) * _GH_X
    e = np.arctan(h(x)) @ _GH_W / math.sqrt(math.pi)
    lim = math.pi / 2.0 - ARCTAN_CLAMP
    return np.tan(np.clip(e, -lim, lim))


class _GaussianRegression:
    """Conditional law of a Gaussian functional given the path on a coarse past sub-grid."""

    def __init__(self, model: ProcessModel, cov_fn, variance: float, max_points: int = 256):
        self.model = model
        self.cov_fn = cov_fn
        self.variance = float(variance)
        self.max_points = max_points
        self._cache: dict = {}

    def _plan(self, grid: TimeGrid, i: int):
        key = (grid.t_start, grid.t_end, grid.n_points, i)
        plan = self._cache.get(key)
        if plan is None:
            if i == 0 and grid.t_start == 0.0:
                plan = (np.zeros(0, dtype=int), np.zeros(0), self.variance)
            else:
                lo = 1 if grid.t_start == 0.0 else 0
                idx = np.unique(np.linspace(lo, i, min(self.max_points, i - lo + 1)).round().astype(int))
                s = grid.times[idx]
                S = self.model.covariance(s[:, None], s[None, :])
                c = self.cov_fn(s)
                w = linalg.solve(S, c, assume_a="pos")
                plan = (idx, w, max(self.variance - float(c @ w), 0.0))
            self._cache[key] = plan
        return plan

    def conditional(self, values: np.ndarray, grid: TimeGrid, i: int):
        """Mean and standard deviation given the values at grid indices up to ``i``."""
        idx, w, var = self._plan(grid, i)
        values = np.asarray(values)
        m = values[..., idx] @ w if idx.size else np.zeros(values.shape[:-1])
        return m, math.sqrt(var)


class ConstantTarget:
    """``xi = c``."""

    def __init__(self, c: float):
        self.c = float(c)

    def value(self, values, grid: TimeGrid) -> float:
        return self.c

    def z(self, values, grid: TimeGrid, i: int) -> float:
        return self.c

    def conditional_mean(self, values, grid: TimeGrid, i: int) -> float:
        return self.c


class PointTarget:
    """``xi = h(X(t_star))``; before ``t_star`` the conditional law is Gaussian."""

    def __init__(self, model: ProcessModel, t_star: float, h=None, max_points: int = 256):
        self.model = model
        self.t_star = float(t_star)
        self.h = (lambda x: x) if h is None else h
        self._reg = _GaussianRegression(model, lambda s: model.covariance(s, self.t_star),
                                        float(model.covariance(self.t_star, self.t_star)), max_points)

    def value(self, values, grid: TimeGrid) -> float:
        return float(self.h(values[grid.index_of(self.t_star)]))

    def _known(self, grid: TimeGrid, i: int) -> bool:
        return grid.times[i] >= self.t_star - 1e-12

    def z(self, values, grid: TimeGrid, i: int) -> float:
        if self._known(grid, i):
            return self.value(values, grid)
        m, s = self._reg.conditional(values, grid, i)
        return float(_tan_of_mean_arctan(m, s, self.h))

    def expectation(self, values, grid: TimeGrid, i: int) -> float:
        """``E[h(X(t_star)) | F_t]``."""
        if self._known(grid, i):
            return self.value(values, grid)
        m, s = self._reg.conditional(values, grid, i)
        x = m + s * math.sqrt(2.0) * _GH_X
        return float(self.h(x) @ _GH_W / math.sqrt(math.pi))

    def conditional_mean(self, values, grid: TimeGrid, i: int) -> float:
        """``E[X(t_star) | F_t]`` pushed through ``h`` at the mean (exact for linear ``h``)."""
        if self._known(grid, i):
            return self.value(values, grid)
        m, _ = self._reg.conditional(values, grid, i)
        return float(self.h(m))


class LinearTarget:
    """A linear Gaussian functional ``xi = L(X)`` given by its covariance with ``X(s)``."""

    def __init__(self, model: ProcessModel, cov_fn, variance: float, evaluate, max_points: int = 256):
        self.model = model
        self._evaluate = evaluate
        self._reg = _GaussianRegression(model, cov_fn, variance, max_points)

    @classmethod
    def integral(cls, model: ProcessModel, max_points: int = 256) -> "LinearTarget":
        """``xi = int_0^1 X(s) ds`` (trapezoidal rule on the path grid)."""
        if model.kind == "wiener":
            raise ValueError("the integral target is provided for fbm and mixed models")
        H = model.H
        q = 2.0 * H + 1.0

        def cov(s):
            s = np.asarray(s, dtype=float)
            fb = 0.5 * (1.0 / q + s ** (2 * H) - (s**q + (1.0 - s) ** q) / q)
            return fb + (s - s * s / 2.0 if model.kind == "mixed" else 0.0)

        var = 1.0 / (2.0 * H + 2.0) + (1.0 / 3.0 if model.kind == "mixed" else 0.0)
        return cls(model, cov, var, lambda v, g: float(np.trapezoid(v, g.times)), max_points)

    def value(self, values, grid: TimeGrid) -> float:
        return self._evaluate(np.asarray(values), grid)

    def z(self, values, grid: TimeGrid, i: int) -> float:
        if i == grid.n_points - 1:
            return self.value(values, grid)
        m, s = self._reg.conditional(values, grid, i)
        return float(_tan_of_mean_arctan(m, s, lambda x: x))

    def conditional_mean(self, values, grid: TimeGrid, i: int) -> float:
        if i == grid.n_points - 1:
            return self.value(values, grid)
        return float(self._reg.conditional(values, grid, i)[0])


# -------------------------------------------------------- distribution

def replicate_distribution(path: SamplePath, target_ppf, model_cdf_at_v, v: float,
                           diverger: DivergerState, mesh: Mesh):
    """Integrand on ``[v, 1)`` whose integral is ``g(X(v))`` with ``g = F^{-1} o F_X``.

    Returns ``(integrand, terminal)``.  If the divergent integrand does not
    reach the level within the horizon, ``integrand.meta['failure']`` is set
    and the terminal value is the (signed) level attained at the end.
    """
    if not (path.grid.t_start <= v < 1.0):
        raise ValueError("v must lie inside the path span and below 1")
    iv = path.grid.index_of(v)
    gx = float(target_ppf(model_cdf_at_v(path.values[iv])))
    level, sign = abs(gx), (1.0 if gx >= 0 else -1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        ip = phi_diverger(path, diverger, mesh, window=(v, path.grid.t_end), level=level)
    ip = ip.scaled(sign)
    ip.meta.update(target=gx, level=level)
    terminal = float(ip.running_integral(path)[-1])
    return ip, terminal


# ----------------------------------------------------------- improper

def dyadic_mesh(horizon: int) -> np.ndarray:
    """``t_0 = 0`` and ``t_n = 1 - 2^{-n}`` for ``n = 1..horizon``."""
    return np.concatenate(([0.0], 1.0 - 2.0 ** -np.arange(1, horizon + 1)))


def replicate_variable_improper(path: SamplePath, target, mesh: np.ndarray,
                                diverger: DivergerState, div_mesh: Mesh) -> ReplicationResult:
    """Chain of stopped divergent integrands on ``[t_n, t_{n+1}]``.

    Segment ``n`` moves the running integral from ``y(t_n)`` to ``z(t_n)``,
    so that ``y(t_{n+1}) = z(t_n)`` whenever the level is reached.
    """
    grid = path.grid
    x = path.values
    dx = np.diff(x)
    N = len(mesh) - 1
    total = IntegrandPath.zeros(grid)
    y_at = 0.0
    rec = {k: [] for k in ("tau", "case", "xi", "lam", "over", "hit")}
    flags = []
    zs = []
    for n in range(N):
        a, b = grid.index_of(mesh[n]), grid.index_of(mesh[n + 1])
        zn = target.z(x, grid, a)
        zs.append(zn)
        lam = zn - y_at
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            ip = phi_diverger(path, diverger, div_mesh, window=(mesh[n], mesh[n + 1]),
                              level=abs(lam))
        sgn = 1.0 if lam >= 0 else -1.0
        sl = slice(a, b)
        total.psi[a:b] = sgn * ip.psi[a:b]
        total.coef[sl] = sgn * ip.coef[sl]
        total.segment_index[a:b] = n
        total.case_tag[a:b] = np.where(ip.case_tag[a:b] == "", "", "diverger")
        y_next = y_at + float(np.dot(total.coef[sl], dx[sl]))
        hit = bool(ip.trace.stopped)
        if not hit:
            flags.append(f"segment {n}: level {abs(lam):.4g} not reached (attained {ip.trace.attained:.4g})")
        rec["tau"].append(ip.trace.stop_time if hit else float(mesh[n + 1]))
        rec["case"].append("diverger")
        rec["xi"].append(zn)
        rec["lam"].append(lam)
        rec["over"].append(y_next - zn)
        rec["hit"].append(hit)
        y_at = y_next
    y = total.running_integral(path)
    xi = target.value(x, grid)
    return ReplicationResult(
        integrand=total, y=y, t_mesh=np.asarray(mesh), tau=np.asarray(rec["tau"]),
        case=np.asarray(rec["case"]), xi_n=np.asarray(rec["xi"]), Lambda_n=np.asarray(rec["lam"]),
        overshoot=np.asarray(rec["over"]), hit=np.asarray(rec["hit"]),
        terminal=float(y[grid.index_of(mesh[-1])]), target=xi, case_B_count=0, flags=flags,
        extras={"y_mesh": np.array([y[grid.index_of(t)] for t in mesh])},
    )


# ------------------------------------------------------------- proper

def _runoff(ip: IntegrandPath, k: int, m: int) -> None:
    """Linear decay from ``psi[k]`` to zero over ``m`` cells."""
    ramp = ip.psi[k] * (1.0 - np.arange(m + 1) / m)
    ip.psi[k:k + m + 1] = ramp
    ip.coef[k:k + m] = ramp[:-1]
    ip.case_tag[k:k + m] = "linear"


def replicate_proper(path: SamplePath, z, params: ParameterSet, horizon: int,
                     diverger: DivergerState, div_mesh: Mesh, schedule: str = "dyadic",
                     case_b_level: float = 1.0, on_track_tol: float = 1e-12) -> ReplicationResult:
    """Track the Hoelder process ``z`` along the mesh so that ``y(tau_n) = z(t_{n-1})``.

    Segment ``n >= 2`` lives on ``[t_{n-1}, t_n]``.  If the previous segment
    reached its target before its deadline (case A), the integrand is
    ``a_n g_n'(X - X(t_{n-1})) sign(Lambda_n)`` until ``a_n g_n`` reaches
    ``|Lambda_n|``; otherwise (case B) a divergent integrand on
    ``[t_{n-1}, t'_n]``, multiplied by ``|Lambda_n| / case_b_level``, runs until its
    integral reaches ``|Lambda_n|``.  Either way the integrand then decays
    linearly to zero.  ``Lambda_n = z(t_{n-1}) - y(t_{n-1})``.
    """
    grid = path.grid
    if isinstance(z, SamplePath):
        if z.grid != grid:
            raise ValueError("the target process must share the path grid")
        zv = z.values
        z_at = lambda i: float(zv[i])
    else:
        z_at = z
    x = path.values
    dx = np.diff(x)
    h = grid.step
    pm = proper_mesh(params, horizon, schedule)
    ip = IntegrandPath.zeros(grid)
    idx = lambda t: grid.index_at_or_after(t)
    rec = {k: [] for k in ("tau", "case", "xi", "lam", "over", "hit", "chain", "chain_s", "tau_i")}
    flags = []
    # Segment 1 is identically zero and ends on track iff z(0) = 0.
    on_track = abs(z_at(idx(pm.t[0]))) <= on_track_tol
    y_at = 0.0
    y_ptr = idx(pm.t[1])
    for n in range(2, horizon + 1):
        a, p, e = idx(pm.t[n - 1]), idx(pm.t_prime[n - 1]), idx(pm.t[n])
        if not (a < p < e):
            flags.append(f"segment {n}: mesh not resolvable on the grid; horizon truncated")
            break
        y_at += float(np.dot(ip.coef[y_ptr:a], dx[y_ptr:a]))
        y_ptr = a
        xi_n = z_at(a)
        lam = xi_n - y_at
        sgn = 1.0 if lam >= 0 else -1.0
        chain = chain_s = np.nan
        if on_track:
            case = "A"
            d = x[a:p + 1] - x[a]
            g, gp = smoothed_abs(1.0 / pm.eps_n[n - 1], d)
            G = pm.a_n[n - 1] * g
            crossed = np.nonzero(G >= abs(lam))[0]
            hit = crossed.size > 0
            k = a + (int(crossed[0]) if hit else p - a)
            ip.psi[a:k + 1] = pm.a_n[n - 1] * gp[: k - a + 1] * sgn
            ip.coef[a:k] = ip.psi[a:k]
            ip.case_tag[a:k] = "A"
            ylocal = np.concatenate(([0.0], np.cumsum(ip.coef[a:k] * dx[a:k])))
            chain_s = float(np.max(np.abs(ylocal - sgn * G[: k - a + 1])))
            chain = chain_s / pm.a_n[n - 1]
            tau = float(grid.times[k])
        else:
            case = "B"
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                dv = phi_diverger(path, diverger, div_mesh,
                                  window=(float(grid.times[a]), float(grid.times[p])),
                                  level=case_b_level)
            dv = dv.scaled(sgn * abs(lam) / case_b_level)
            hit = bool(dv.trace.stopped)
            if hit:
                j = dv.trace.stop_index
                ip.psi[a:j + 1] = dv.psi[a:j + 1]
                ip.coef[a:j + 1] = dv.coef[a:j + 1]
                k = j + 1
                ip.psi[k] = dv.psi[j]
                tau = float(dv.trace.stop_time)
            else:
                k = p
                ip.psi[a:k + 1] = dv.psi[a:k + 1]
                ip.coef[a:k] = dv.coef[a:k]
                tau = float(grid.times[k])
            ip.case_tag[a:k] = "B"
        m = int(round(pm.delta_tilde[n - 1] / h))
        m = max(1, min(m, e - k))
        if e - k < 1:
            flags.append(f"segment {n}: no room for the run-off")
        else:
            _runoff(ip, k, m)
        ip.segment_index[a:e] = n
        y_tau = y_at + float(np.dot(ip.coef[a:k], dx[a:k]))
        rec["tau"].append(tau)
        rec["tau_i"].append(k)
        rec["case"].append(case)
        rec["xi"].append(xi_n)
        rec["lam"].append(lam)
        rec["over"].append(y_tau - xi_n)
        rec["hit"].append(hit)
        rec["chain"].append(chain)
        rec["chain_s"].append(chain_s)
        on_track = hit
    y = ip.running_integral(path)
    seg_cases = np.asarray(rec["case"])
    iN = idx(pm.t[min(horizon, len(seg_cases) + 1)])
    res = ReplicationResult(
        integrand=ip, y=y, t_mesh=pm.t[: len(seg_cases) + 2], tau=np.asarray(rec["tau"]),
        case=seg_cases, xi_n=np.asarray(rec["xi"]), Lambda_n=np.asarray(rec["lam"]),
        overshoot=np.asarray(rec["over"]), hit=np.asarray(rec["hit"], dtype=bool),
        terminal=float(y[iN]), target=z_at(grid.n_points - 1), case_B_count=int(np.sum(seg_cases == "B")),
        flags=flags,
        extras={"segments": np.arange(2, len(seg_cases) + 2), "chain_residual": np.asarray(rec["chain"]),
                "chain_residual_scaled": np.asarray(rec["chain_s"]),
                "tau_index": np.asarray(rec["tau_i"], dtype=int), "beta": params.beta,
                "terminal_index": iN},
    )
    return res


def tail_norms(res: ReplicationResult, beta: float | None = None) -> np.ndarray:
    """``||psi||_{beta; [tau_n, t_N]}`` for every segment of a proper replication."""
    beta = res.extras["beta"] if beta is None else beta
    ip = res.integrand
    iN = res.extras["terminal_index"]
    f = GridFunction(ip.grid, ip.psi)
    out = []
    for k in res.extras["tau_index"]:
        if iN - k < 2:
            out.append(0.0)
            continue
        out.append(beta_norm(f, beta, ip.grid.times[k], ip.grid.times[iN]))
    return np.asarray(out)


# -------------------------------------------------------------- mixed

def replicate_mixed(W: SamplePath, B: SamplePath, target, approx=None, n_blocks: int = 10,
                    k_of_n=None) -> ReplicationResult:
    """Representation against ``X = W + B^H`` on blocks ``[t_n, t_{n+1}]``, ``t_n = 1 - 2^{-k(n)}``.

    On block ``n`` the integrand is ``(t_{n+1} - t)^{-1/2}`` until the Wiener
    part of the block integral reaches ``xi_{k(n)} - v(t_n)``.  ``approx(k, W, B)``
    returns the ``F_{1-2^{-k}}``-measurable approximation ``xi_k``; by default it is
    ``target.conditional_mean`` applied to ``W + B`` at ``1 - 2^{-k}``.
    """
    grid = W.grid
    if B.grid != grid:
        raise ValueError("W and B must share the grid")
    w, bh = W.values, B.values
    xv = w + bh
    dW, dB = np.diff(w), np.diff(bh)
    h = grid.step
    ks = [n for n in range(1, n_blocks + 2)] if k_of_n is None else [k_of_n(n) for n in range(1, n_blocks + 2)]
    t = 1.0 - 2.0 ** -np.asarray(ks, dtype=float)
    if approx is None:
        approx = lambda k, W_, B_: target.conditional_mean(W_.values + B_.values, grid,
                                                           grid.index_of(1.0 - 2.0**-k))
    ip = IntegrandPath.zeros(grid)
    rec = {k: [] for k in ("tau", "xi", "lam", "hit", "G", "vH", "vW", "ident", "v_start")}
    flags = []
    v_at = 0.0
    vB_total = 0.0
    for n in range(n_blocks):
        a, b = grid.index_of(t[n]), grid.index_of(t[n + 1])
        xi_k = float(approx(ks[n], W, B))
        level = xi_k - v_at
        psi = (t[n + 1] - grid.times[a:b]) ** -0.5
        c = psi.copy()
        incW = c * dW[a:b]
        vw = np.concatenate(([0.0], np.cumsum(incW)))
        if level == 0.0:
            j, theta = 0, 0.0
            hit = True
        else:
            crossed = np.nonzero((vw[1:] - level) * np.sign(level) >= 0.0)[0]
            hit = crossed.size > 0
            if hit:
                j = int(crossed[0])
                theta = (level - vw[j]) / incW[j] if incW[j] != 0.0 else 1.0
                theta = min(max(theta, 0.0), 1.0)
        if hit:
            c[j] *= theta
            c[j + 1:] = 0.0
            if level != 0.0:
                ip.psi[a:a + j + 1] = psi[: j + 1]
            tau = float(grid.times[a + j] + theta * h)
        else:
            flags.append(f"block {n + 1}: Wiener level {level:.4g} not reached before t_(n+1)")
            ip.psi[a:b] = psi
            tau = float(t[n + 1])
        ip.coef[a:b] = c
        ip.segment_index[a:b] = n + 1
        ip.case_tag[a:b] = np.where(c != 0.0, "block", "")
        vW_n = float(np.dot(c, dW[a:b]))
        vH_n = float(np.dot(c, dB[a:b]))
        G_n = float(np.sum(c * psi) * h)  # psi^2 over full cells, theta psi^2 over the cut cell
        v_next = v_at + vW_n + vH_n
        rec["tau"].append(tau)
        rec["xi"].append(xi_k)
        rec["lam"].append(level)
        rec["hit"].append(hit)
        rec["G"].append(G_n)
        rec["vH"].append(vH_n)
        rec["vW"].append(vW_n)
        rec["ident"].append(v_next - (xi_k + vH_n) if hit else np.nan)
        rec["v_start"].append(v_at)
        vB_total += vH_n
        v_at = v_next
    y = ip.running_integral(xv)
    xi = float(target.value(xv, grid))
    iN = grid.index_of(t[n_blocks])
    return ReplicationResult(
        integrand=ip, y=y, t_mesh=t, tau=np.asarray(rec["tau"]),
        case=np.full(n_blocks, "block"), xi_n=np.asarray(rec["xi"]), Lambda_n=np.asarray(rec["lam"]),
        overshoot=np.asarray(rec["ident"]), hit=np.asarray(rec["hit"], dtype=bool),
        terminal=float(y[iN]), target=xi, case_B_count=0, flags=flags,
        extras={"G_n": np.asarray(rec["G"]), "v_H_n": np.asarray(rec["vH"]),
                "v_W_n": np.asarray(rec["vW"]), "block_identity_residual": np.asarray(rec["ident"]),
                "k_n": np.asarray(ks), "v_H_total": vB_total},
    )
