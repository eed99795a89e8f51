import json

import numpy as np
import pytest
from scipy.integrate import trapezoid

from cspe.chain import DrawStore
from cspe.errors import DataError
from cspe.io import save_draw_store
from cspe.summary import credible_interval, density_grid, summarize, summarize_store, write_summary


def synthetic_store(n=1001):
    """Draws with known quantiles: omega_1 runs 0..1000 evenly, tau is constant."""
    it = np.arange(n)
    omega = np.column_stack((np.linspace(0.0, 1000.0, n), np.full(n, 2.0)))
    return DrawStore(J=3, T=3, K=2, prior_label="test", iteration=it, omega=omega,
                     omega_star=np.column_stack((omega[:, 0] - 2.0, omega[:, 1])),
                     tau=np.full(n, 4.0), lam=np.full((n, 2), np.nan),
                     z=np.zeros((n, 2), int), pi=np.full((n, 2), np.nan),
                     unitarity=np.zeros((n, 2)), theta_mean=np.eye(3),
                     step_size=np.ones(n), n_leapfrog=np.ones(n, int),
                     accept_stat=np.ones(n), diverged=np.zeros(n, bool))


def test_known_quantiles():
    s = summarize_store(synthetic_store())
    np.testing.assert_allclose(s.omega_mean, [500.0, 2.0])
    np.testing.assert_allclose(s.omega_lower, [25.0, 2.0])
    np.testing.assert_allclose(s.omega_upper, [975.0, 2.0])
    assert s.tau_inv_mean == 0.25 and s.tau_inv_lower == s.tau_inv_upper == 0.25


def test_variance_shares_sum_to_one(small_store):
    s = summarize_store(small_store)
    assert s.share_mean.sum() == pytest.approx(1.0)
    assert s.share_mean.size == small_store.K + 1
    assert np.all(s.share_lower <= s.share_mean) and np.all(s.share_mean <= s.share_upper)


def test_single_draw_rejected():
    store = synthetic_store(1)
    with pytest.raises(DataError, match="at least 2"):
        summarize_store(store)


def test_density_integrates_to_one(rng):
    grid, dens = density_grid(rng.gamma(3.0, 1.0, size=500))
    assert trapezoid(dens, grid) == pytest.approx(1.0, abs=0.01)
    assert grid.size == 512


def test_degenerate_density():
    grid, dens = density_grid(np.full(10, 0.25))
    assert trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-9)


def test_credible_interval_matches_quantile(rng):
    x = rng.standard_normal((2000, 3))
    lo, hi = credible_interval(x, 0.9)
    np.testing.assert_allclose(lo, np.quantile(x, 0.05, axis=0))
    np.testing.assert_allclose(hi, np.quantile(x, 0.95, axis=0))


def test_summarize_is_bit_exact(tmp_path, small_store):
    d = save_draw_store(small_store, tmp_path / "s", {}, "h", 3)
    write_summary(summarize(d), tmp_path / "a")
    write_summary(summarize(d), tmp_path / "b")
    for f in ("summary.json", "summary.csv", "summary_theta_mean.csv", "tau_inv_density.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    meta = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert meta["config_hash"] == "h" and meta["seed"] == 3
    direct = summarize_store(small_store)
    np.testing.assert_array_equal(summarize(d).omega_mean, direct.omega_mean)


def test_back_transform_file(tmp_path, small_store):
    from cspe.io import RowScaling

    scaling = RowScaling(np.arange(6.0), np.full(6, 2.0))
    write_summary(summarize_store(small_store), tmp_path, scaling)
    m = np.loadtxt(tmp_path / "summary_theta_mean_original_units.csv", delimiter=",")
    np.testing.assert_allclose(m, small_store.theta_mean * 2 + np.arange(6.0)[:, None])
