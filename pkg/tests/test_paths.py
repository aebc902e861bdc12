import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from holderrep.paths import (
    ProcessModel,
    SamplePath,
    TimeGrid,
    estimate_holder,
    fbm_covariance,
    load_bundle,
    load_path_csv,
    save_bundle,
    save_path_csv,
    simulate_fbm,
    simulate_fbm_paths,
    simulate_mixed,
    simulate_wiener,
    simulate_wiener_paths,
)


def test_grid_basics():
    g = TimeGrid.unit(8)
    assert g.n_points == 9 and g.step == 0.125
    assert g.index_at_or_after(0.3) == 3
    assert g.index_of(0.25) == 2
    with pytest.raises(ValueError):
        g.index_of(0.3)
    with pytest.raises(ValueError):
        TimeGrid(0.5, 0.2, 10)
    with pytest.raises(ValueError):
        TimeGrid.from_times([0.0, 0.1, 0.3])


@given(st.floats(0.0, 1.0), st.integers(3, 12))
def test_index_at_or_after_snaps_up(t, k):
    g = TimeGrid.unit(2**k)
    i = g.index_at_or_after(t)
    tol = 1e-9 * g.step
    assert g.times[i] >= t - tol
    assert i == 0 or g.times[i - 1] < t - tol


def test_fbm_starts_at_zero_and_is_deterministic():
    g = TimeGrid.unit(256)
    a = simulate_fbm(0.75, g, seed=7, path_index=3)
    b = simulate_fbm(0.75, g, seed=7, path_index=3)
    assert a.values[0] == 0.0
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, simulate_fbm(0.75, g, seed=7, path_index=4).values)


def test_batching_does_not_change_paths():
    g = TimeGrid.unit(512)
    full = simulate_fbm_paths(0.7, g, seed=1, n_paths=6)
    part = simulate_fbm_paths(0.7, g, seed=1, n_paths=3, start=3)
    assert np.array_equal(full[3:], part)
    w = simulate_wiener_paths(g, seed=1, n_paths=4)
    assert np.array_equal(w[2], simulate_wiener(g, seed=1, path_index=2).values)


@pytest.mark.parametrize("n_steps", [2**10, 2**13])
def test_fbm_self_similarity(n_steps):
    g = TimeGrid.unit(n_steps)
    H, N = 0.75, 4000
    x = simulate_fbm_paths(H, g, seed=11, n_paths=N)
    for t in (0.25, 0.5, 1.0):
        v = x[:, g.index_of(t)]
        se = t ** (2 * H) * np.sqrt(2.0 / (N - 1))
        assert abs(np.var(v, ddof=1) - t ** (2 * H)) <= 3 * se


def test_fbm_covariance_on_coarse_subgrid():
    g = TimeGrid.unit(2**10)
    H, N = 0.75, 10000
    x = simulate_fbm_paths(H, g, seed=5, n_paths=N)
    ts = np.linspace(0.125, 1.0, 8)
    cols = x[:, [g.index_of(t) for t in ts]]
    emp = np.cov(cols, rowvar=False)
    th = fbm_covariance(H, ts[:, None], ts[None, :])
    assert np.max(np.abs(emp - th)) <= 5 / np.sqrt(N)


def test_fbm_gaussian_linear_functional():
    g = TimeGrid.unit(2**9)
    x = simulate_fbm_paths(0.75, g, seed=2, n_paths=10000)
    lin = x.mean(axis=1)
    assert stats.jarque_bera(lin).pvalue > 0.01


def test_wiener_independent_increments():
    g = TimeGrid.unit(2**8)
    w = simulate_wiener_paths(g, seed=3, n_paths=10000)
    d1 = w[:, 64] - w[:, 0]
    d2 = w[:, 128] - w[:, 64]
    assert np.all(w[:, 0] == 0.0)
    assert abs(np.corrcoef(d1, d2)[0, 1]) <= 0.05


def test_mixed_identity_and_variance():
    g = TimeGrid.unit(2**9)
    W, B, X = simulate_mixed(0.75, g, seed=4, path_index=0)
    assert np.array_equal(X.values, W.values + B.values)
    xs = ProcessModel("mixed", 0.75).sample(g, seed=4, n_paths=4000)
    assert abs(np.var(xs[:, -1], ddof=1) - 2.0) <= 0.1
    W2, B2, X2 = simulate_mixed(0.75, g, seed=4, path_index=0)
    assert np.array_equal(X.values, X2.values)


def test_invalid_hurst():
    with pytest.raises(ValueError):
        simulate_fbm(0.4, TimeGrid.unit(16), seed=0)
    with pytest.raises(ValueError):
        ProcessModel("levy")


def test_estimate_holder_examples():
    g = TimeGrid.unit(128)
    assert estimate_holder(SamplePath(g, np.zeros(g.n_points)), 0.5).c_hat == 0.0
    lin = SamplePath(g, g.times.copy())
    assert estimate_holder(lin, 0.5).c_hat == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ValueError):
        estimate_holder(lin, 0.5, window=(0.5, 0.5))


def test_estimate_holder_stable_under_refinement():
    coarse = simulate_fbm(0.75, TimeGrid.unit(2**14), seed=9)
    c_fine = estimate_holder(coarse, 0.7).c_hat
    sub = SamplePath(TimeGrid.unit(2**10), coarse.values[:: 2**4])
    c_coarse = estimate_holder(sub, 0.7).c_hat
    assert np.isfinite(c_fine)
    assert abs(c_fine / c_coarse - 1.0) <= 0.2


def test_csv_and_bundle_roundtrip(tmp_path):
    p = simulate_fbm(0.75, TimeGrid.unit(64), seed=1)
    f = tmp_path / "p.csv"
    save_path_csv(p, f)
    q = load_path_csv(f)
    assert np.array_equal(p.values, q.values)
    save_bundle(tmp_path / "b.npz", {"x": p})
    assert np.array_equal(load_bundle(tmp_path / "b.npz")["x"].values, p.values)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 50))
def test_seed_determinism_property(seed, idx):
    g = TimeGrid.unit(32)
    assert np.array_equal(simulate_fbm(0.6, g, seed, idx).values, simulate_fbm(0.6, g, seed, idx).values)
