import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from holderrep.paths import TimeGrid, simulate_fbm
from holderrep.stieltjes import (
    FracOrder,
    GridFunction,
    beta_norm,
    frac_deriv_left,
    frac_deriv_right,
    gls_integral,
    lambda_seminorm,
    young_integral,
)


def _gf(n, fn):
    return GridFunction.from_callable(TimeGrid.unit(n), fn)


def _at(gf: GridFunction, t: float) -> float:
    return float(gf.values[gf.grid.index_of(t)])


def test_frac_order_validation():
    with pytest.raises(ValueError):
        FracOrder(1.0)
    with pytest.raises(ValueError):
        frac_deriv_left(_gf(64, lambda t: t), beta=0.0)
    with pytest.raises(ValueError):
        frac_deriv_left(_gf(64, lambda t: t), a=0.5, b=0.5)


def test_left_derivative_closed_forms():
    one = frac_deriv_left(_gf(1024, np.ones_like), beta=0.5)
    assert _at(one, 0.25) == pytest.approx(2 / math.sqrt(math.pi), abs=1e-3)
    ident = frac_deriv_left(_gf(1024, lambda t: t), beta=0.5)
    assert _at(ident, 0.25) == pytest.approx(0.25**0.5 / special.gamma(1.5), rel=1e-6)
    zero = frac_deriv_left(_gf(128, np.zeros_like), beta=0.3)
    assert np.all(zero.values == 0.0)


def test_right_derivative():
    assert np.all(frac_deriv_right(_gf(128, lambda t: np.full_like(t, 3.0)), beta=0.4).values == 0.0)
    # Marchaud form for g(x) = x, b = 1: |D^{1/2}_{1-} g_{1-}(1/2)| = 2 sqrt(1/2) / Gamma(1/2)
    oracle = 2 * math.sqrt(0.5) / math.sqrt(math.pi)
    coarse = _at(frac_deriv_right(_gf(256, lambda t: t), beta=0.5), 0.5)
    fine = _at(frac_deriv_right(_gf(2560, lambda t: t), beta=0.5), 0.5)
    assert abs(abs(coarse) - oracle) <= 1e-4 * oracle
    assert abs(coarse - fine) <= 1e-4 * abs(fine)


def test_right_derivative_linearity():
    g = TimeGrid.unit(512)
    g1 = GridFunction.from_path(simulate_fbm(0.75, g, seed=1))
    g2 = GridFunction.from_callable(g, np.sin)
    lhs = frac_deriv_right(g1 + g2, beta=0.6).values
    rhs = frac_deriv_right(g1, beta=0.6).values + frac_deriv_right(g2, beta=0.6).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(rhs)))


def test_gls_elementary():
    f = _gf(4096, lambda t: np.full_like(t, 2.5))
    g = _gf(4096, np.sin)
    assert gls_integral(f, g, beta=0.5) == pytest.approx(2.5 * math.sin(1.0), rel=1e-6)
    s = _gf(4096, lambda t: t)
    assert gls_integral(s, s, beta=0.5) == pytest.approx(0.5, abs=1e-3)


def test_gls_matches_young_on_fbm():
    grid = TimeGrid.unit(2**14)
    g = GridFunction.from_path(simulate_fbm(0.75, grid, seed=3))
    f = GridFunction.from_callable(grid, lambda t: t)
    y = young_integral(f, g)
    assert abs(gls_integral(f, g, beta=0.5) - y) <= 1e-3 * abs(y)


def test_gls_overflow_guard():
    grid = TimeGrid.unit(64)
    f = GridFunction(grid, np.full(65, 1e200))
    with pytest.raises(ValueError, match="not admissible"):
        gls_integral(f, GridFunction.from_callable(grid, lambda t: t), beta=0.5)


def test_young_sum_examples():
    k = 10
    s = _gf(2**k, lambda t: t)
    assert young_integral(s, s) == pytest.approx(0.5 - 2.0 ** (-k - 1), abs=1e-14)
    g = GridFunction.from_path(simulate_fbm(0.75, TimeGrid.unit(256), seed=2))
    one = GridFunction.from_callable(g.grid, np.ones_like)
    assert young_integral(one, g) == pytest.approx(g.values[-1] - g.values[0], abs=1e-14)
    f = GridFunction.from_callable(g.grid, np.cos)
    assert young_integral(f, g.scaled(-1.0)) == pytest.approx(-young_integral(f, g), abs=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.3, 0.9))
def test_integrals_linear_in_f(c1, c2, beta):
    grid = TimeGrid.unit(256)
    g = GridFunction.from_path(simulate_fbm(0.75, grid, seed=4))
    f1 = GridFunction.from_callable(grid, lambda t: t**2)
    f2 = GridFunction.from_callable(grid, np.cos)
    comb = f1.scaled(c1) + f2.scaled(c2)
    for integral in (lambda f: gls_integral(f, g, beta=beta), lambda f: young_integral(f, g)):
        lhs = integral(comb)
        rhs = c1 * integral(f1) + c2 * integral(f2)
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(rhs))


def test_lambda_seminorm_closed_forms():
    s = _gf(1024, lambda t: t)
    assert lambda_seminorm(s, beta=0.4) == pytest.approx(3.5, abs=1e-2)
    assert lambda_seminorm(s, beta=0.8) == pytest.approx(2.25, abs=1e-2)
    assert lambda_seminorm(_gf(128, np.ones_like), beta=0.5) == 0.0


def test_beta_norm_closed_forms():
    assert beta_norm(_gf(1024, np.zeros_like), beta=0.5) == 0.0
    assert beta_norm(_gf(4096, np.ones_like), beta=0.5) == pytest.approx(2.0, abs=1e-2)
    assert beta_norm(_gf(4096, lambda t: t), beta=0.5) == pytest.approx(2.0, abs=1e-2)


def test_chain_rule_on_fbm():
    path = simulate_fbm(0.75, TimeGrid.unit(2**16), seed=8)
    x = GridFunction.from_path(path)
    dphi = GridFunction(x.grid, np.cos(x.values))
    lhs = young_integral(dphi, x)
    assert abs(lhs - (math.sin(x.values[-1]) - math.sin(x.values[0]))) <= 1e-2


def test_young_estimate_ratio_bounded():
    # |int f dg| <= C ||f||_beta Lambda_beta(g) with one constant across cases
    rng = np.random.default_rng(0)
    grid = TimeGrid.unit(512)
    ratios = []
    for i in range(10):
        g = GridFunction.from_path(simulate_fbm(0.75, grid, seed=100 + i))
        c = rng.normal(size=4)
        f = GridFunction.from_callable(grid, lambda t: np.polyval(c, t))
        beta = rng.uniform(0.3, 0.95)
        v = abs(gls_integral(f, g, beta=beta))
        ratios.append(v / (beta_norm(f, beta=beta) * lambda_seminorm(g, beta=beta)))
    assert max(ratios) < 1.0
