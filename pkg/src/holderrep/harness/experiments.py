"""Experiment drivers.

Each experiment has a ``compute`` step that simulates and returns per-path
tables, and an ``aggregate`` step that derives the summary and checks from
those tables alone.  The runner aggregates from the CSV files it has just
written, which is what makes ``--audit`` re-aggregation exact.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from ..diverger import (DivergerState, build_mesh, mixed_oscillator, phi_diverger)
from ..paths import ProcessModel, SamplePath, TimeGrid, estimate_holder
from ..replicate import (ConstantTarget, LinearTarget, PointTarget, choose_parameters,
                         dyadic_mesh, replicate_distribution, replicate_mixed, replicate_proper,
                         replicate_variable_improper, tail_norms)
from ..smallball import SmallBallQuery, check_event_summability, estimate_small_ball, window_suprema
from ..stieltjes import GridFunction, beta_norm, frac_deriv_left, gls_integral, lambda_seminorm, \
    young_integral
from .config import ConfigError, ExperimentConfig
from .stats import ks_critical_value, ks_statistic

__all__ = ["Table", "EXPERIMENT_REGISTRY", "SCHEMAS"]


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)

    def add(self, *row) -> None:
        self.rows.append(row)


@dataclass
class Output:
    tables: dict
    extra_files: dict = field(default_factory=dict)  # name -> callable(path)


def _check(value, threshold, passed: bool, note: str = "") -> dict:
    return {"value": value, "threshold": threshold, "passed": bool(passed), "note": note}


def _model(cfg: ExperimentConfig) -> ProcessModel:
    return ProcessModel(cfg.model, None if cfg.model == "wiener" else cfg.H)


def _grid(cfg: ExperimentConfig) -> TimeGrid:
    return TimeGrid.unit(cfg.grid)


def _iter_paths(cfg: ExperimentConfig, model: ProcessModel, grid: TimeGrid):
    """Yield ``(index, W, B)`` sample paths batch by batch (absent component is ``None``)."""
    for s in range(0, cfg.n_paths, cfg.batch):
        m = min(cfg.batch, cfg.n_paths - s)
        W, B = model.sample_components(grid, cfg.seed, m, start=s)
        for j in range(m):
            w = None if W is None else SamplePath(grid, W[j], "wiener", cfg.seed, s + j)
            b = None if B is None else SamplePath(grid, B[j], f"fbm({model.H:g})", cfg.seed, s + j)
            yield s + j, w, b


def _combined(model: ProcessModel, w, b) -> SamplePath:
    if w is None:
        return b.with_values(b.values, model.tag)
    if b is None:
        return w
    return w.with_values(w.values + b.values, model.tag)


def _diverger(cfg: ExperimentConfig):
    try:
        state = DivergerState(cfg.div_gamma, cfg.div_eta, cfg.div_mu, cfg.div_alpha,
                              level_scale=cfg.level_scale)
        mesh = build_mesh(cfg.div_gamma, cfg.div_mu, cfg.horizon)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    return state, mesh


def _params(cfg: ExperimentConfig):
    over = {k: cfg.optional(k) for k in ("beta", "mu", "kappa", "gamma", "eps", "eps_hat")}
    over = {k: v for k, v in over.items() if v is not None}
    margins = {}
    for k in ("eps", "eps_hat"):
        if k in over:
            margins[k] = over.pop(k)
    if cfg.optional("delta") is not None:
        margins["delta"] = cfg.delta
    try:
        return choose_parameters(cfg.alpha, cfg.a, margins, **over)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def _median(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.median(x)) if x.size else float("nan")


# ------------------------------------------------------------ simulate

def simulate_compute(cfg: ExperimentConfig) -> Output:
    model, grid = _model(cfg), _grid(cfg)
    alpha = min(cfg.alpha, (0.5 if model.kind != "fbm" else model.H) - 0.05)
    t = Table(["path", "x_end", "sup_abs", "holder_c_hat"])
    extra = {}
    for i, w, b in _iter_paths(cfg, model, grid):
        p = _combined(model, w, b)
        t.add(i, float(p.values[-1]), float(np.abs(p.values).max()), estimate_holder(p, alpha).c_hat)
        if i < cfg.export_paths:
            extra[f"path_{i:04d}.csv"] = _path_writer(p)
    return Output({"paths": t}, extra)


def _path_writer(p: SamplePath):
    from ..paths import save_path_csv
    return lambda file: save_path_csv(p, file)


def simulate_aggregate(cfg: ExperimentConfig, tables: dict):
    x = tables["paths"]["x_end"]
    n = x.size
    var = float(np.var(x, ddof=1)) if n > 1 else float("nan")
    theory = float(_model(cfg).covariance(1.0, 1.0))
    se = theory * math.sqrt(2.0 / max(n - 1, 1))
    summary = {"n_paths": int(n), "mean_x_end": float(np.mean(x)), "var_x_end": var,
               "var_theory": theory, "median_holder_c_hat": _median(tables["paths"]["holder_c_hat"])}
    checks = {"variance_x_end": _check(var, theory, n > 1 and abs(var - theory) <= 4 * se,
                                       "within 4 standard errors of Var X(1)")}
    return summary, checks


# ------------------------------------------------------------- diverge

def diverge_compute(cfg: ExperimentConfig) -> Output:
    model, grid = _model(cfg), _grid(cfg)
    state, mesh = _diverger(cfg)
    seg = Table(["path", "n", "threshold", "tau", "hit", "overshoot", "increment",
                 "excursion_integral", "runoff_integral", "y_tn", "lower_bound"])
    osc = Table(["path", "b_part", "u_05", "u_075", "u_09"])
    extra = {}
    t_trunc = 1.0 - grid.step
    for i, w, b in _iter_paths(cfg, model, grid):
        p = _combined(model, w, b)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            ip = phi_diverger(p, state, mesh)
        tr = ip.trace
        y = ip.running_integral(p)
        lb = tr.lower_bound(state.eta)
        for n in range(tr.horizon_used):
            e = min(grid.index_at_or_after(mesh.t_n[n]), grid.n_points - 1)
            seg.add(i, n + 1, float(tr.threshold[n]), float(tr.tau[n]), int(tr.hit[n]),
                    float(tr.overshoot[n]), float(tr.increment[n]), float(tr.excursion_integral[n]),
                    float(tr.runoff_integral[n]), float(y[e]), float(lb[n]))
        zero = SamplePath(grid, np.zeros(grid.n_points))
        bp = float(mixed_oscillator(zero, b, t_trunc)[1]) if b is not None else float("nan")
        us = [float(mixed_oscillator(w, zero, t)[0]) if w is not None else float("nan")
              for t in (0.5, 0.75, 0.9)]
        osc.add(i, bp, *us)
        if i < cfg.export_paths:
            extra[f"integrand_{i:04d}.csv"] = ip.to_csv
    return Output({"segments": seg, "oscillator": osc}, extra)


def _per_n(tab: dict, col: str):
    n = tab["n"].astype(int)
    ns = np.unique(n)
    return ns, [tab[col][n == k] for k in ns]


def diverge_aggregate(cfg: ExperimentConfig, tables: dict):
    seg, osc = tables["segments"], tables["oscillator"]
    ns, ys = _per_n(seg, "y_tn")
    med = np.array([np.median(v) for v in ys]) if len(ys) else np.zeros(0)
    _, hits = _per_n(seg, "hit")
    p_events = np.array([1.0 - np.mean(h) for h in hits]) if len(hits) else np.zeros(0)
    sums, plateau = check_event_summability(p_events)
    lb_ok = bool(np.all(seg["y_tn"] >= seg["lower_bound"] - 1e-9 * (1.0 + np.abs(seg["lower_bound"]))))
    H = cfg.H
    summary = {
        "horizon_used": int(ns.max()) if ns.size else 0,
        "median_running_integral": [float(v) for v in med],
        "max_median_running_integral": float(med.max()) if med.size else float("nan"),
        "event_probabilities": [float(v) for v in p_events],
        "event_partial_sum": float(sums[-1]) if sums.size else 0.0,
        "event_plateau": bool(plateau),
    }
    checks = {
        "median_exceeds_10": _check(summary["max_median_running_integral"], 10.0,
                                    med.size > 0 and med.max() > 10.0),
        "lower_bound_holds": _check(lb_ok, True, lb_ok, "running integral >= construction lower bound"),
    }
    bvals = osc["b_part"][np.isfinite(osc["b_part"])]
    if bvals.size > 1:
        target = 2.0 * H * special.beta(2.0 * H - 1.0, 0.5)
        v = float(np.var(bvals, ddof=1))
        summary.update(var_b_part=v, var_b_part_theory=target)
        checks["var_b_part"] = _check(v, target, abs(v / target - 1.0) <= 0.05, "within 5%")
    for col, t in (("u_05", 0.5), ("u_075", 0.75), ("u_09", 0.9)):
        u = osc[col][np.isfinite(osc[col])]
        if u.size > 1:
            v, target = float(np.var(u, ddof=1)), -math.log(1.0 - t)
            summary[f"var_{col}"] = v
            checks[f"var_{col}"] = _check(v, target, abs(v / target - 1.0) <= 0.05, "within 5%")
    return summary, checks


# ----------------------------------------------------------- smallball

def smallball_compute(cfg: ExperimentConfig) -> Output:
    model, grid = _model(cfg), _grid(cfg)
    sb = Table(["delta", "epsilon", "p_hat", "stderr", "c_fit", "flagged", "n_paths"])
    for d in cfg.floats("deltas"):
        base = SmallBallQuery(d, 1.0, cfg.div_alpha, cfg.n_paths)
        sup = None
        for e in cfg.floats("epsilons"):
            q = SmallBallQuery(d, e, cfg.div_alpha, cfg.n_paths)
            if sup is None:
                sup = window_suprema(model, base, cfg.seed, cfg.window_points, cfg.batch)
            est = estimate_small_ball(model, q, cfg.seed, cfg.window_points, sup_values=sup)
            sb.add(d, e, est.p_hat, est.stderr, float("nan") if est.c_fit is None else est.c_fit,
                   int(est.flagged), est.n_paths)
    state, mesh = _diverger(cfg)
    ev = Table(["path", "n", "event"])
    for i, w, b in _iter_paths(cfg, model, grid):
        p = _combined(model, w, b)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            tr = phi_diverger(p, state, mesh).trace
        for n, a in enumerate(tr.event_A, start=1):
            ev.add(i, n, int(a))
    return Output({"small_ball": sb, "events": ev})


def _pairs_monotone(x, p, se, increasing: bool) -> bool:
    o = np.argsort(x)
    p, se = p[o], se[o]
    d = np.diff(p) if increasing else -np.diff(p)
    tol = 2.0 * np.sqrt(se[1:] ** 2 + se[:-1] ** 2)
    return bool(np.all(d >= -tol - 1e-15))


def smallball_aggregate(cfg: ExperimentConfig, tables: dict):
    sb, ev = tables["small_ball"], tables["events"]
    eps_ok = all(_pairs_monotone(sb["epsilon"][sb["delta"] == d], sb["p_hat"][sb["delta"] == d],
                                 sb["stderr"][sb["delta"] == d], True) for d in np.unique(sb["delta"]))
    del_ok = all(_pairs_monotone(sb["delta"][sb["epsilon"] == e], sb["p_hat"][sb["epsilon"] == e],
                                 sb["stderr"][sb["epsilon"] == e], False) for e in np.unique(sb["epsilon"]))
    ns, evs = _per_n(ev, "event")
    p = np.array([np.mean(v) for v in evs]) if len(evs) else np.zeros(0)
    sums, plateau = check_event_summability(p)
    summary = {"event_probabilities": [float(v) for v in p],
               "event_partial_sums": [float(v) for v in sums],
               "event_plateau": bool(plateau), "horizon_used": int(ns.max()) if ns.size else 0,
               "c_fit": [None if not np.isfinite(c) else float(c) for c in sb["c_fit"]]}
    checks = {"monotone_in_epsilon": _check(eps_ok, True, eps_ok, "within 2 standard errors"),
              "monotone_in_delta": _check(del_ok, True, del_ok, "within 2 standard errors"),
              "event_plateau": _check(float(sums[-1]) if sums.size else 0.0, 0.01, plateau,
                                      "last-quartile increment <= 1% of total")}
    return summary, checks


# --------------------------------------------- replicate-distribution

_DISTRIBUTIONS = {
    "normal": (stats.norm.ppf, stats.norm.cdf),
    "uniform": (stats.uniform.ppf, stats.uniform.cdf),
}


def distribution_compute(cfg: ExperimentConfig) -> Output:
    model, grid = _model(cfg), _grid(cfg)
    state, mesh = _diverger(cfg)
    names = [s.strip() for s in cfg.target.split(",")]
    for nm in names:
        if nm not in _DISTRIBUTIONS:
            raise ConfigError(f"target must be one of {sorted(_DISTRIBUTIONS)}, got {nm!r}")
    if not (0.0 < cfg.v < 1.0):
        raise ConfigError("v must lie in (0, 1)")
    sd = math.sqrt(float(model.covariance(cfg.v, cfg.v)))
    fx = lambda x: stats.norm.cdf(x / sd)
    t = Table(["path", "target", "terminal", "level", "failure", "attained"])
    extra = {}
    for i, w, b in _iter_paths(cfg, model, grid):
        p = _combined(model, w, b)
        for nm in names:
            ip, term = replicate_distribution(p, _DISTRIBUTIONS[nm][0], fx, cfg.v, state, mesh)
            t.add(i, nm, term, ip.meta["level"], int("failure" in ip.meta), ip.trace.attained)
            if i < cfg.export_paths:
                extra[f"integrand_{nm}_{i:04d}.csv"] = ip.to_csv
    return Output({"terminals": t}, extra)


def distribution_aggregate(cfg: ExperimentConfig, tables: dict):
    t = tables["terminals"]
    summary, checks = {}, {}
    for nm in [s.strip() for s in cfg.target.split(",")]:
        m = t["target"] == nm
        x = t["terminal"][m]
        ks = ks_statistic(x, _DISTRIBUTIONS[nm][1])
        crit = float(ks_critical_value(x.size, 0.01))
        fail = float(np.mean(t["failure"][m]))
        summary[nm] = {"ks": ks, "ks_critical_1pct": crit, "failure_rate": fail,
                       "mean_terminal": float(np.mean(x))}
        checks[f"ks_{nm}"] = _check(ks, crit, ks <= crit, "1% Kolmogorov-Smirnov critical value")
        checks[f"failures_{nm}"] = _check(fail, 0.01, fail <= 0.01, "diverger exhausted")
    return summary, checks


# ------------------------------------------------- replicate-improper

def _point_or_linear(cfg: ExperimentConfig, model: ProcessModel):
    if cfg.target == "point":
        return PointTarget(model, cfg.t_star)
    if cfg.target == "integral":
        return LinearTarget.integral(model)
    if cfg.target == "constant":
        return ConstantTarget(cfg.constant)
    raise ConfigError(f"target must be point, integral or constant, got {cfg.target!r}")


def improper_compute(cfg: ExperimentConfig) -> Output:
    model, grid = _model(cfg), _grid(cfg)
    state, mesh = _diverger(cfg)
    target = _point_or_linear(cfg, model)
    horizons = cfg.ints("horizons")
    N = max(horizons)
    tn = dyadic_mesh(N)
    if grid.n_steps < 2 ** (N + 2):
        raise ConfigError(f"grid of {grid.n_steps} steps cannot resolve the mesh of horizon {N}")
    traj = Table(["path", "N", "t_N", "y_tN", "xi", "error"])
    seg = Table(["path", "n", "level", "hit", "tau", "overshoot"])
    extra = {}
    for i, w, b in _iter_paths(cfg, model, grid):
        p = _combined(model, w, b)
        r = replicate_variable_improper(p, target, tn, state, mesh)
        for Nh in horizons:
            yN = float(r.extras["y_mesh"][Nh])
            traj.add(i, Nh, float(tn[Nh]), yN, r.target, abs(yN - r.target))
        for n in range(N):
            seg.add(i, n, float(r.Lambda_n[n]), int(r.hit[n]), float(r.tau[n]), float(r.overshoot[n]))
        if i < cfg.export_paths:
            extra[f"integrand_{i:04d}.csv"] = r.integrand.to_csv
    return Output({"trajectory": traj, "segments": seg}, extra)


def improper_aggregate(cfg: ExperimentConfig, tables: dict):
    tr, seg = tables["trajectory"], tables["segments"]
    horizons = cfg.ints("horizons")
    med = [_median(tr["error"][tr["N"] == N]) for N in horizons]
    last = tr["error"][tr["N"] == max(horizons)]
    frac = float(np.mean(last <= 0.05))
    miss = float(1.0 - np.mean(seg["hit"]))
    # medians at roundoff level are already converged
    dec = bool(all(b < a or max(a, b) <= 1e-12 for a, b in zip(med, med[1:])))
    summary = {"horizons": horizons, "median_error": med, "fraction_error_le_0.05": frac,
               "segment_miss_rate": miss}
    checks = {"median_error_decreasing": _check(med, None, dec),
              "fraction_error_le_0.05": _check(frac, 0.9, frac >= 0.9, f"at N={max(horizons)}")}
    return summary, checks


# --------------------------------------------------- replicate-proper

def proper_compute(cfg: ExperimentConfig) -> Output:
    model, grid = _model(cfg), _grid(cfg)
    if model.kind != "fbm":
        raise ConfigError("replicate-proper is defined for the fbm model")
    params = _params(cfg)
    state, mesh = _diverger(cfg)
    horizons = cfg.ints("horizons")
    N = max(horizons)
    term = Table(["path", "N", "y_tN", "xi", "error"])
    seg = Table(["path", "n", "case", "hit", "tau", "Lambda", "overshoot", "chain_residual",
                 "chain_residual_scaled", "tail_norm"])
    extra = {}
    for i, w, b in _iter_paths(cfg, model, grid):
        p = _combined(model, w, b)
        z = lambda k, v=p.values: float(np.arctan(v[k]))
        r = replicate_proper(p, z, params, N, state, mesh, cfg.schedule, cfg.case_b_level)
        for Nh in horizons:
            yN = float(r.y[grid.index_at_or_after(r.t_mesh[Nh])]) if Nh < r.t_mesh.size else float("nan")
            term.add(i, Nh, yN, r.target, abs(yN - r.target))
        norms = tail_norms(r) if i < cfg.norm_paths else np.full(r.case.size, np.nan)
        for j in range(r.case.size):
            seg.add(i, int(r.extras["segments"][j]), str(r.case[j]), int(r.hit[j]), float(r.tau[j]),
                    float(r.Lambda_n[j]), float(r.overshoot[j]), float(r.extras["chain_residual"][j]),
                    float(r.extras["chain_residual_scaled"][j]), float(norms[j]))
        if i < cfg.export_paths:
            extra[f"integrand_{i:04d}.csv"] = r.integrand.to_csv
    return Output({"terminals": term, "segments": seg}, extra)


def proper_aggregate(cfg: ExperimentConfig, tables: dict):
    term, seg = tables["terminals"], tables["segments"]
    horizons = cfg.ints("horizons")
    N = max(horizons)
    med = [_median(term["error"][term["N"] == h]) for h in horizons]
    late = seg["n"] > N / 2.0
    freq_b = float(np.mean(seg["case"][late] == "B")) if np.any(late) else float("nan")
    ns = np.unique(seg["n"].astype(int))
    norm_med = [_median(seg["tail_norm"][(seg["n"] == n) & np.isfinite(seg["tail_norm"])]) for n in ns]
    chain = seg["chain_residual"][np.isfinite(seg["chain_residual"])]
    chain_max = float(chain.max()) if chain.size else 0.0
    chain_s = seg["chain_residual_scaled"][np.isfinite(seg["chain_residual_scaled"])]
    dec = bool(all(b < a for a, b in zip(med, med[1:])))
    nm = [v for v in norm_med if np.isfinite(v)]
    norm_dec = bool(all(b < a for a, b in zip(nm, nm[1:])))
    summary = {"params": _params(cfg).__dict__, "horizons": horizons, "median_error": med,
               "case_B_frequency_late": freq_b,
               "case_B_count_total": int(np.sum(seg["case"] == "B")),
               "median_tail_norm": norm_med, "max_chain_residual": chain_max,
               "max_chain_residual_scaled": float(chain_s.max()) if chain_s.size else 0.0}
    checks = {"median_error_decreasing": _check(med, None, dec),
              "case_B_frequency_late": _check(freq_b, 0.1, freq_b <= 0.1, f"segments n > {N / 2:g}"),
              "tail_norm_decreasing": _check(norm_med, None, norm_dec),
              "chain_rule_residual": _check(chain_max, 1e-2, chain_max <= 1e-2)}
    return summary, checks


# ---------------------------------------------------- replicate-mixed

def mixed_compute(cfg: ExperimentConfig) -> Output:
    if cfg.model != "mixed":
        raise ConfigError("replicate-mixed requires model = mixed")
    model, grid = _model(cfg), _grid(cfg)
    if grid.n_steps < 2 ** (cfg.n_blocks + 5):
        raise ConfigError(f"grid of {grid.n_steps} steps cannot resolve {cfg.n_blocks} blocks")
    target = _point_or_linear(cfg, model)
    blocks = Table(["path", "n", "k", "level", "hit", "tau", "G", "v_H", "v_W", "identity_residual"])
    term = Table(["path", "v_tN", "xi", "error"])
    extra = {}
    for i, w, b in _iter_paths(cfg, model, grid):
        r = replicate_mixed(w, b, target, n_blocks=cfg.n_blocks)
        e = r.extras
        for n in range(cfg.n_blocks):
            blocks.add(i, n + 1, int(e["k_n"][n]), float(r.Lambda_n[n]), int(r.hit[n]), float(r.tau[n]),
                       float(e["G_n"][n]), float(e["v_H_n"][n]), float(e["v_W_n"][n]),
                       float(e["block_identity_residual"][n]))
        term.add(i, r.terminal, r.target, r.terminal_error)
        if i < cfg.export_paths:
            extra[f"integrand_{i:04d}.csv"] = r.integrand.to_csv
    return Output({"blocks": blocks, "terminals": term}, extra)


def mixed_aggregate(cfg: ExperimentConfig, tables: dict):
    bl, term = tables["blocks"], tables["terminals"]
    frac = float(np.mean(term["error"] <= 0.05))
    all_hit = bool(np.all(bl["hit"] == 1))
    res = bl["identity_residual"][bl["hit"] == 1]
    res_max = float(np.max(np.abs(res))) if res.size else 0.0
    ns, Gs = _per_n(bl, "G")
    G_med = np.array([np.median(g) for g in Gs])
    G_mean = np.array([np.mean(g) for g in Gs])
    sums, plateau = check_event_summability(G_med / G_med.sum() if G_med.sum() > 0 else G_med)
    summary = {"fraction_error_le_0.05": frac, "median_error": _median(term["error"]),
               "block_miss_rate": float(1.0 - np.mean(bl["hit"])),
               "paths_all_blocks_hit": float(np.mean([np.all(bl["hit"][bl["path"] == p] == 1)
                                                     for p in np.unique(bl["path"])])),
               "max_identity_residual": res_max, "median_G_n": [float(g) for g in G_med],
               "mean_G_n": [float(g) for g in G_mean], "G_plateau": bool(plateau)}
    checks = {"fraction_error_le_0.05": _check(frac, 0.9, frac >= 0.9),
              "block_identity_every_block": _check(res_max, 1e-8, all_hit and res_max <= 1e-8,
                                                   "every block reaches its Wiener level"),
              "G_plateau": _check(bool(plateau), True, plateau, "median G_n, last quartile <= 1%")}
    return summary, checks


# --------------------------------------------------- verify-integrals

def verify_compute(cfg: ExperimentConfig) -> Output:
    grid = _grid(cfg)
    H = cfg.H
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 3]))
    cases = Table(["case", "beta", "gls", "young", "rel_err"])
    model = ProcessModel("fbm", H)
    done = 0
    for i, _, b in _iter_paths(cfg, model, grid):
        coef = rng.normal(size=4)
        beta = float(rng.uniform(1.0 - H + 0.05, 0.95))
        f = GridFunction(grid, np.polynomial.polynomial.polyval(grid.times, coef))
        g = GridFunction.from_path(b)
        gl, yo = gls_integral(f, g, beta), young_integral(f, g)
        cases.add(i, beta, gl, yo, abs(gl - yo) / abs(yo) if yo != 0.0 else abs(gl))
        done += 1
    closed = Table(["name", "value", "expected", "tol"])
    ident = GridFunction.from_callable(grid, lambda t: t)
    one = GridFunction.from_callable(grid, lambda t: np.ones_like(t))
    closed.add("lambda_seminorm_identity_beta_0.4", lambda_seminorm(ident, 0.4), 3.5, 1e-2)
    closed.add("beta_norm_one_beta_0.5", beta_norm(one, 0.5), 2.0, 1e-2)
    d = frac_deriv_left(one, beta=0.5)
    closed.add("frac_deriv_left_one_at_0.25", float(d.values[d.grid.index_of(0.25)]),
               2.0 / math.sqrt(math.pi), 1e-3)
    return Output({"cases": cases, "closed_form": closed})


def verify_aggregate(cfg: ExperimentConfig, tables: dict):
    c, cf = tables["cases"], tables["closed_form"]
    worst = float(np.max(c["rel_err"])) if c["rel_err"].size else 0.0
    summary = {"n_cases": int(c["rel_err"].size), "max_rel_err": worst,
               "closed_form": {nm: float(v) for nm, v in zip(cf["name"], cf["value"])}}
    checks = {"gls_vs_young": _check(worst, 1e-2, worst <= 1e-2)}
    for nm, v, e, tol in zip(cf["name"], cf["value"], cf["expected"], cf["tol"]):
        checks[str(nm)] = _check(float(v), float(e), abs(v - e) <= tol, f"tolerance {tol:g}")
    return summary, checks


EXPERIMENT_REGISTRY = {
    "simulate": (simulate_compute, simulate_aggregate),
    "diverge": (diverge_compute, diverge_aggregate),
    "smallball": (smallball_compute, smallball_aggregate),
    "replicate-distribution": (distribution_compute, distribution_aggregate),
    "replicate-improper": (improper_compute, improper_aggregate),
    "replicate-proper": (proper_compute, proper_aggregate),
    "replicate-mixed": (mixed_compute, mixed_aggregate),
    "verify-integrals": (verify_compute, verify_aggregate),
}

_PATH = "path index (0-based); per-path seeds are (seed, component, path)"
SCHEMAS = {
    "simulate": {"paths": {"path": _PATH, "x_end": "X(1)", "sup_abs": "max |X(t)|",
                           "holder_c_hat": "largest |dX| / lag^alpha over dyadic lags"}},
    "diverge": {
        "segments": {"path": _PATH, "n": "mesh interval", "threshold": "n^{-1/(1+eta)}",
                     "tau": "stopping time (grid point)", "hit": "1 if the threshold was reached before t'_n",
                     "overshoot": "|dX(tau)| - threshold (normalized units)", "increment": "normalized X(tau) - X(t_{n-1})",
                     "excursion_integral": "integral over [t_{n-1}, tau]", "runoff_integral": "integral over the linear run-off",
                     "y_tn": "running integral at t_n", "lower_bound": "running lower bound of the construction"},
        "oscillator": {"path": _PATH, "b_part": "int_0^{1-h} (1-s)^{-1/2} dB^H",
                       "u_05": "int_0^0.5 (1-s)^{-1/2} dW", "u_075": "same up to 0.75", "u_09": "same up to 0.9"}},
    "smallball": {
        "small_ball": {"delta": "window length", "epsilon": "ball radius", "p_hat": "Monte Carlo probability",
                       "stderr": "binomial standard error", "c_fit": "-ln p / (delta epsilon^{-1/alpha})",
                       "flagged": "1 if epsilon > delta^alpha", "n_paths": "paths used"},
        "events": {"path": _PATH, "n": "mesh interval", "event": "1 if the diverger threshold was not reached (A_n)"}},
    "replicate-distribution": {"terminals": {
        "path": _PATH, "target": "target distribution", "terminal": "integral of psi over [0, 1]",
        "level": "|g(X(v))|", "failure": "1 if the level was not reached", "attained": "level reached"}},
    "replicate-improper": {
        "trajectory": {"path": _PATH, "N": "horizon", "t_N": "1 - 2^{-N}", "y_tN": "running integral at t_N",
                       "xi": "target value", "error": "|y(t_N) - xi|"},
        "segments": {"path": _PATH, "n": "segment on [t_n, t_{n+1}]", "level": "z(t_n) - y(t_n)",
                     "hit": "1 if the level was reached", "tau": "stopping time", "overshoot": "y(t_{n+1}) - z(t_n)"}},
    "replicate-proper": {
        "terminals": {"path": _PATH, "N": "horizon", "y_tN": "running integral at t_N", "xi": "arctan X(1)",
                      "error": "|y(t_N) - xi|"},
        "segments": {"path": _PATH, "n": "segment on [t_{n-1}, t_n]", "case": "A (tracking) or B (divergent)",
                     "hit": "1 if y reached xi_n before t'_n", "tau": "stopping time", "Lambda": "xi_n - y(t_{n-1})",
                     "overshoot": "y(tau_n) - xi_n", "chain_residual": "max |int g_n'(X - X(t_{n-1})) dX - g_n(X - X(t_{n-1}))| in case A",
                     "chain_residual_scaled": "chain_residual times a_n",
                     "tail_norm": "||psi||_beta on [tau_n, t_N] (first paths only)"}},
    "replicate-mixed": {
        "blocks": {"path": _PATH, "n": "block", "k": "k(n)", "level": "xi_k(n) - v(t_n)",
                   "hit": "1 if the Wiener part reached the level", "tau": "stopping time",
                   "G": "int psi^2 dt over the block", "v_H": "fbm part of the block integral",
                   "v_W": "Wiener part of the block integral",
                   "identity_residual": "v(t_{n+1}) - xi_k(n) - v_H (blank when missed)"},
        "terminals": {"path": _PATH, "v_tN": "v at the end of the last block", "xi": "target", "error": "|v - xi|"}},
    "verify-integrals": {
        "cases": {"case": "case index", "beta": "fractional order", "gls": "generalized Lebesgue-Stieltjes value",
                  "young": "Riemann-Stieltjes sum", "rel_err": "|gls - young| / |young|"},
        "closed_form": {"name": "functional", "value": "computed", "expected": "closed form", "tol": "tolerance"}},
}
