import warnings

import numpy as np
import pytest

from cspe.chain import ChainConfig, run_chain
from cspe.factorization import ObservedMatrix
from cspe.nuts import NutsConfig
from cspe.posterior import RelaxationSchedule
from cspe.priors import CSPE, SSE, Exponential, Lomax, Noninformative

FAST = ChainConfig(iterations=400, burn_in=200, seed=5,
                   nuts=NutsConfig(adapt_iterations=200),
                   schedule=RelaxationSchedule(eta_bar1=200.0, eta_bar2=200.0))


@pytest.fixture(scope="module")
def diag_data():
    rng = np.random.default_rng(11)
    Y = np.zeros((5, 5))
    Y[0, 0], Y[1, 1] = 3.0, 1.0
    return ObservedMatrix.complete(Y + 0.01 * rng.standard_normal((5, 5)))


@pytest.mark.parametrize("prior", [Noninformative(), Exponential(0.1), Lomax(2.0, 20.0),
                                   SSE(), CSPE(1.0)], ids=lambda p: p.label)
def test_recovers_near_noiseless_diagonal(diag_data, prior):
    store = run_chain(diag_data, prior, FAST, K=2)
    np.testing.assert_allclose(store.omega_mean(), [3.0, 1.0], atol=0.05)
    np.testing.assert_allclose(store.theta_mean, diag_data.values, atol=0.05)
    assert np.median(1 / store.tau) < 0.01


def test_deterministic(diag_data):
    a = run_chain(diag_data, CSPE(1.0), FAST, K=2)
    b = run_chain(diag_data, CSPE(1.0), FAST, K=2)
    for name in ("omega", "omega_star", "tau", "lam", "z", "pi", "theta_mean", "step_size"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


def test_seed_changes_draws(diag_data):
    from dataclasses import replace

    a = run_chain(diag_data, Noninformative(), FAST, K=2)
    b = run_chain(diag_data, Noninformative(), replace(FAST, seed=6), K=2)
    assert not np.array_equal(a.tau, b.tau)


def test_store_layout(diag_data):
    from dataclasses import replace

    cfg = replace(FAST, thin=4, store_factors=True)
    store = run_chain(diag_data, CSPE(1.0), cfg, K=2)
    assert store.n_draws == 50
    np.testing.assert_array_equal(store.iteration, np.arange(204, 401, 4))
    assert store.phi.shape == (50, 5, 2) and store.psi.shape == (50, 5, 2)
    assert store.step_size.shape == (400,)
    assert np.all((store.z >= 1) & (store.z <= 2))
    np.testing.assert_allclose(store.pi[:, -1], 1.0)
    np.testing.assert_allclose(store.omega, np.cumsum(store.omega_star[:, ::-1], axis=1)[:, ::-1])


def test_missing_cells_are_imputed():
    rng = np.random.default_rng(3)
    Y = np.outer(rng.standard_normal(6), rng.standard_normal(6)) * 2
    Y += 0.05 * rng.standard_normal((6, 6))
    mask = np.ones((6, 6), bool)
    mask[0, :3] = False
    values = np.where(mask, Y, np.nan)
    store = run_chain(ObservedMatrix(values, mask), Noninformative(), FAST, K=1)
    assert np.all(np.isfinite(store.theta_mean))
    np.testing.assert_allclose(store.theta_mean[0, :3], Y[0, :3], atol=0.3)


def test_frozen_theta_and_fixed_tau(diag_data):
    from dataclasses import replace

    cfg = replace(FAST, freeze_theta=True, fixed_tau=2.0)
    store = run_chain(diag_data, CSPE(1.0), cfg, K=2)
    assert np.all(store.tau == 2.0)
    assert np.all(store.omega == store.omega[0])
    assert len(np.unique(store.lam[:, 0])) > 1


def test_divergence_warning(diag_data):
    cfg = ChainConfig(iterations=60, burn_in=10, seed=1,
                      nuts=NutsConfig(adapt_iterations=0, initial_step_size=5.0))
    with pytest.warns(RuntimeWarning, match="diverged"):
        store = run_chain(diag_data, Noninformative(), cfg, K=2)
    assert store.divergence_rate > 0.1


def test_no_warning_when_healthy(diag_data):
    with warnings.catch_warnings():
        warnings.simplefilter("error", RuntimeWarning)
        run_chain(diag_data, Noninformative(), FAST, K=2)


def test_rank_bounds(diag_data):
    with pytest.raises(ValueError, match="max_rank"):
        run_chain(diag_data, Noninformative(), FAST, K=3)


@pytest.mark.parametrize("kw", [dict(iterations=10, burn_in=10), dict(thin=0), dict(nu1=0.0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ChainConfig(**kw)
