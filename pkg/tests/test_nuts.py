import math

import numba
import numpy as np
import pytest

from cspe.nuts import DualAveraging, NutsConfig, NutsSampler, Target, sample


@numba.njit(cache=True)
def gaussian(theta, args):
    scales = args[0]
    z = theta / scales
    return -0.5 * np.sum(z * z), -z / scales


@numba.njit(cache=True)
def relaxed_exponential(theta, args):
    """Exp(1) in each coordinate, with positivity replaced by a sigmoid penalty."""
    eta = args[0]
    lp = 0.0
    g = np.empty_like(theta)
    for i in range(theta.size):
        x = -eta * theta[i]
        sp = x if x > 30 else math.log1p(math.exp(x))
        lp += -theta[i] - sp
        g[i] = -1.0 + eta / (1.0 + math.exp(eta * theta[i]))
    return lp, g


class TestSampling:
    def test_gaussian_moments(self):
        scales = np.array([1.0, 3.0, 0.2])
        draws, infos = sample(Target(gaussian, (scales,)), np.zeros(3), 6000,
                              NutsConfig(adapt_iterations=500, seed=1))
        assert np.all(np.abs(draws.mean(axis=0)) < 0.1 * scales)
        np.testing.assert_allclose(draws.std(axis=0), scales, rtol=0.06)
        assert not any(i.diverged for i in infos)

    def test_relaxed_exponential_pair(self):
        draws, _ = sample(Target(relaxed_exponential, (100.0,)), np.array([0.5, 0.5]), 20000,
                          NutsConfig(adapt_iterations=1000, seed=4))
        np.testing.assert_allclose(draws.mean(axis=0), 1.0, atol=0.05)
        assert (draws < -0.05).mean() < 1e-3

    def test_adapted_acceptance_near_target(self):
        scales = np.linspace(0.5, 2.0, 10)
        _, infos = sample(Target(gaussian, (scales,)), np.ones(10), 3000,
                          NutsConfig(adapt_iterations=1000, target_accept=0.8, seed=3))
        assert np.mean([i.accept_stat for i in infos]) == pytest.approx(0.8, abs=0.07)

    def test_zero_step_leaves_state(self):
        s = NutsSampler(NutsConfig(initial_step_size=0.0, max_tree_depth=3), np.random.default_rng(0))
        target = Target(gaussian, (np.ones(4),))
        theta = np.arange(4.0)
        new, lp, _, info = s.transition(theta, target)
        np.testing.assert_array_equal(new, theta)
        assert lp == target(theta)[0]
        assert info.tree_depth >= 1

    def test_divergence_keeps_a_finite_state(self):
        s = NutsSampler(NutsConfig(initial_step_size=50.0, max_energy_error=10.0),
                        np.random.default_rng(0))
        target = Target(gaussian, (np.full(3, 0.01),))
        theta = np.full(3, 0.001)
        diverged = 0
        for _ in range(50):
            theta, lp, _, info = s.transition(theta, target)
            diverged += info.diverged
            assert np.isfinite(lp)
        assert diverged > 40

    def test_reproducible(self):
        t = Target(gaussian, (np.ones(2),))
        a, _ = sample(t, np.zeros(2), 50, NutsConfig(adapt_iterations=20, seed=9))
        b, _ = sample(t, np.zeros(2), 50, NutsConfig(adapt_iterations=20, seed=9))
        np.testing.assert_array_equal(a, b)


class TestAdaptation:
    def test_dual_averaging_moves_toward_target(self):
        da = DualAveraging(1.0, 0.8)
        for _ in range(30):
            step = da.update(0.2)  # acceptance too low: steps shrink
        assert step < 1.0
        da = DualAveraging(1.0, 0.8)
        for _ in range(30):
            step = da.update(1.0)
        assert step > 1.0

    def test_first_update(self):
        da = DualAveraging(0.5, 0.8)
        step = da.update(0.8)
        assert step == pytest.approx(10 * 0.5)  # h_bar = 0 leaves log step at mu

    def test_reasonable_step_scales_with_target(self):
        s = NutsSampler(NutsConfig(), np.random.default_rng(4))
        wide = s.find_reasonable_step_size(np.zeros(5), Target(gaussian, (np.full(5, 10.0),)))
        narrow = s.find_reasonable_step_size(np.zeros(5), Target(gaussian, (np.full(5, 0.1),)))
        assert wide > 10 * narrow

    @pytest.mark.parametrize("kw", [dict(target_accept=1.0), dict(max_tree_depth=0),
                                    dict(adapt_iterations=-1), dict(initial_step_size=-0.1)])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            NutsConfig(**kw)
