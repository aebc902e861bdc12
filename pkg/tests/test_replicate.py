import math

import numpy as np
import pytest
from scipy import stats

from holderrep.diverger import DivergerState, build_mesh, deterministic_integral
from holderrep.paths import ProcessModel, SamplePath, TimeGrid, simulate_fbm, simulate_mixed, simulate_wiener_paths
from holderrep.replicate import (
    DELTA_LADDER,
    ConstantTarget,
    LinearTarget,
    ParameterSet,
    PointTarget,
    choose_parameters,
    proper_mesh,
    replicate_distribution,
    replicate_mixed,
    replicate_proper,
    replicate_variable_improper,
)
from holderrep.replicate import dyadic_mesh

FBM = ProcessModel("fbm", 0.75)
STATE = DivergerState(gamma=1.2, eta=0.05, mu=1.5, alpha=0.7, level_scale=0.05)
DMESH = build_mesh(1.2, 1.5, 200)


# ------------------------------------------------------------ parameters

ALPHAS = np.round(np.arange(0.55, 0.951, 0.05), 10)


@pytest.mark.parametrize("alpha", ALPHAS)
@pytest.mark.parametrize("frac", np.round(np.arange(0.1, 0.91, 0.1), 10))
def test_choose_parameters_grid(alpha, frac):
    p = choose_parameters(alpha, frac * alpha)
    d = p.delta_margin
    assert d in DELTA_LADDER
    assert all(v >= d / 2 for v in p.constraint_values().values())
    assert 1 - alpha < p.beta < 1 - alpha + p.a
    assert p.mu == pytest.approx(alpha - p.a + d)
    assert p.kappa == pytest.approx(alpha + d)
    assert p.eps == p.eps_hat == pytest.approx(d / 4)


def test_worked_example():
    p = choose_parameters(0.6, 0.5, margins={"delta": 0.01, "eps": 0.0, "eps_hat": 0.0},
                          beta=0.45, gamma=1.2)
    assert (p.mu, p.kappa) == pytest.approx((0.11, 0.61))
    assert p.constraint_values()["(6)"] == pytest.approx(0.43, abs=1e-12)
    assert all(v > 0 for v in p.constraint_values().values())


def test_rejections_name_the_constraint():
    with pytest.raises(ValueError, match="a < alpha"):
        choose_parameters(0.75, 0.75)
    with pytest.raises(ValueError, match="a < alpha"):
        choose_parameters(0.75, 0.8)
    with pytest.raises(ValueError, match=r"constraint \(6\) <= 0"):
        choose_parameters(0.6, 0.5, margins={"delta": 0.01}, mu=0.5, kappa=0.9, beta=0.45)
    with pytest.raises(ValueError, match="beta in"):
        ParameterSet(0.7, 0.5, 0.1, 0.3, 0.8, 1.2, 0.0, 0.0, 0.01).validate()
    with pytest.raises(TypeError):
        choose_parameters(0.7, 0.5, lam=1.0)


@pytest.mark.parametrize("schedule", ["dyadic", "power"])
def test_proper_mesh(schedule):
    p = choose_parameters(0.7, 0.6)
    m = proper_mesh(p, 12, schedule)
    assert m.t[0] == 0.0 and np.all(np.diff(m.t) > 0) and m.t[-1] <= 1.0
    assert np.all(m.t[:-1] < m.t_prime) and np.all(m.t_prime < m.t[1:])
    assert np.all(m.delta_tilde <= m.delta / 2)
    assert np.allclose(m.a_n, m.delta**-p.mu) and np.allclose(m.eps_n, m.delta**p.kappa)


# ----------------------------------------------------------- distribution

def _fbm_cdf(v):
    return lambda x: stats.norm.cdf(x / v**0.75)


def test_distribution_point_mass():
    p = simulate_fbm(0.75, TimeGrid.unit(2**12), seed=0)
    ip, term = replicate_distribution(p, lambda u: 0.0, _fbm_cdf(0.5), 0.5, STATE, DMESH)
    assert term == 0.0 and np.all(ip.psi == 0.0)


def test_distribution_segment_before_v_and_sign_symmetry():
    p = simulate_fbm(0.75, TimeGrid.unit(2**14), seed=1)
    ppf = stats.norm.ppf
    ip, term = replicate_distribution(p, ppf, _fbm_cdf(0.5), 0.5, STATE, DMESH)
    iv = p.grid.index_of(0.5)
    assert np.all(ip.psi[:iv + 1] == 0.0)
    target = ppf(_fbm_cdf(0.5)(p.values[iv]))
    if not ip.meta.get("failure"):
        assert term == pytest.approx(target, abs=1e-10)
    ip2, term2 = replicate_distribution(p, lambda u: -ppf(u), _fbm_cdf(0.5), 0.5, STATE, DMESH)
    assert term2 == -term
    with pytest.raises(ValueError):
        replicate_distribution(p, ppf, _fbm_cdf(0.5), 1.0, STATE, DMESH)


def test_distribution_small_sample_ks():
    grid = TimeGrid.unit(2**14)
    terms = []
    for row in FBM.sample(grid, seed=2, n_paths=100):
        ip, t = replicate_distribution(SamplePath(grid, row, FBM.tag), stats.norm.ppf, _fbm_cdf(0.5),
                                       0.5, STATE, DMESH)
        terms.append(t)
    assert stats.kstest(terms, "norm").statistic <= 1.628 / math.sqrt(100)


# --------------------------------------------------------------- improper

def test_improper_constant_target():
    p = simulate_fbm(0.75, TimeGrid.unit(2**14), seed=3)
    res = replicate_variable_improper(p, ConstantTarget(1.5), dyadic_mesh(6), STATE, DMESH)
    if res.hit[0]:
        assert np.allclose(res.extras["y_mesh"][1:], 1.5, atol=1e-12)
        assert res.terminal == pytest.approx(1.5, abs=1e-12)
    assert np.all(res.xi_n == 1.5)


def test_point_target_z():
    grid = TimeGrid.unit(2**12)
    p = simulate_fbm(0.75, grid, seed=4)
    tgt = PointTarget(FBM, 0.5)
    i = grid.index_of(0.75)
    assert tgt.z(p.values, grid, i) == tgt.value(p.values, grid) == p.values[grid.index_of(0.5)]
    assert tgt.conditional_mean(p.values, grid, 0) == pytest.approx(0.0, abs=1e-12)
    at = PointTarget(FBM, 0.5, h=np.arctan)
    assert abs(at.expectation(p.values, grid, 0)) <= 1e-12


def test_linear_target_regression():
    grid = TimeGrid.unit(2**12)
    tgt = LinearTarget.integral(FBM)
    rows = FBM.sample(grid, seed=5, n_paths=400)
    i = grid.index_of(0.5)
    resid = [tgt.value(r, grid) - tgt.conditional_mean(r, grid, i) for r in rows]
    vals = [tgt.value(r, grid) for r in rows]
    # conditioning on half the path removes most of the variance
    assert np.var(resid) < 0.25 * np.var(vals)
    assert abs(np.mean(resid)) <= 4 * np.std(resid) / math.sqrt(len(rows))
    with pytest.raises(ValueError):
        LinearTarget.integral(ProcessModel("wiener"))


def test_improper_point_target_small():
    grid = TimeGrid.unit(2**14)
    errs = []
    for k, row in enumerate(FBM.sample(grid, seed=6, n_paths=20)):
        p = SamplePath(grid, row, FBM.tag)
        res = replicate_variable_improper(p, PointTarget(FBM, 0.5), dyadic_mesh(8), STATE, DMESH)
        errs.append(abs(res.terminal - p.values[grid.index_of(0.5)]))
    assert np.mean(np.array(errs) <= 0.05) >= 0.8


# ----------------------------------------------------------------- proper

def test_proper_zero_target():
    p = simulate_fbm(0.75, TimeGrid.unit(2**14), seed=7)
    params = choose_parameters(0.7, 0.6)
    res = replicate_proper(p, lambda i: 0.0, params, 8, STATE, DMESH)
    assert np.all(res.Lambda_n == 0.0)
    assert np.all(res.integrand.psi == 0.0)
    assert res.terminal_error == 0.0


def test_proper_case_a_chain_rule_and_stopping():
    params = choose_parameters(0.89, 0.45, beta=0.12, mu=0.6, kappa=0.95, gamma=1.85, eps=0.15)
    p = simulate_fbm(0.75, TimeGrid.unit(2**16), seed=8)
    res = replicate_proper(p, lambda i, v=p.values: float(np.arctan(v[i])), params, 8, STATE, DMESH)
    a = res.case == "A"
    assert np.all(np.nan_to_num(res.extras["chain_residual"][a]) <= 1e-2)
    # y(tau_n) = xi_n on every segment that stopped before its deadline
    assert np.all(np.abs(res.overshoot[res.hit]) <= 1e-10)
    assert res.case[0] == "A"


def test_proper_adapted():
    params = choose_parameters(0.89, 0.45, beta=0.12, mu=0.6, kappa=0.95, gamma=1.85, eps=0.15)
    p = simulate_fbm(0.75, TimeGrid.unit(2**14), seed=9)
    z = lambda vals: (lambda i: float(np.arctan(vals[i])))
    r1 = replicate_proper(p, z(p.values), params, 6, STATE, DMESH)
    k = p.grid.index_at_or_after(0.9)
    v = p.values.copy()
    v[k + 1:] -= 0.7
    r2 = replicate_proper(p.with_values(v), z(v), params, 6, STATE, DMESH)
    assert np.array_equal(r1.integrand.psi[:k + 1], r2.integrand.psi[:k + 1])


# ------------------------------------------------------------------ mixed

def test_mixed_zero_target():
    grid = TimeGrid.unit(2**14)
    W, B, _ = simulate_mixed(0.75, grid, seed=1)
    res = replicate_mixed(W, B, ConstantTarget(0.0), n_blocks=8)
    assert np.all(res.integrand.psi == 0.0)
    assert res.terminal == 0.0


def test_mixed_block_identity():
    grid = TimeGrid.unit(2**16)
    W, B, X = simulate_mixed(0.75, grid, seed=2)
    res = replicate_mixed(W, B, PointTarget(ProcessModel("mixed", 0.75), 0.5), n_blocks=10)
    r = res.extras["block_identity_residual"][res.hit]
    assert np.all(np.abs(r) <= 1e-8)


def test_mixed_rejects_coarse_grid():
    grid = TimeGrid.unit(2**10)
    W, B, _ = simulate_mixed(0.75, grid, seed=3)
    with pytest.raises(ValueError):
        replicate_mixed(W, B, ConstantTarget(1.0), n_blocks=10)


def test_truncated_block_wiener_variance():
    # int (1 - s)^{-1/2} dW with the last cell dropped has variance ~ ln(length / step)
    M = 2**14
    grid = TimeGrid.unit(M)
    W = simulate_wiener_paths(grid, seed=11, n_paths=5000)
    vals = [deterministic_integral(SamplePath(grid, w), lambda s: (1.0 - s) ** -0.5, 1.0 - grid.step)[-1]
            for w in W]
    assert np.var(vals, ddof=1) == pytest.approx(math.log(M), rel=0.1)
