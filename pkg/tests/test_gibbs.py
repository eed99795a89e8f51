import numpy as np
import pytest
from scipy import optimize, stats

from cspe.gibbs import (
    gibbs_update_lambda,
    gibbs_update_sse,
    gibbs_update_tau,
    gibbs_update_upsilon,
    gibbs_update_z,
    impute_missing,
    sse_spike_log_probability,
    tau_posterior_params,
    upsilon_posterior_params,
    z_log_probabilities,
)
from cspe.priors import CSPE, SSE, stick_breaking


def enumerate_z(omega, w, delta=10.0, k1=2.0, k2=20.0):
    K = len(omega)
    P = np.zeros((K, K))
    for k in range(K):
        for l in range(K):
            dens = (stats.expon(scale=1 / delta).pdf(omega[k]) if l <= k
                    else stats.lomax(k1, scale=k2).pdf(omega[k]))
            P[k, l] = w[l] * dens
        P[k] /= P[k].sum()
    return P


class TestIndicators:
    def test_enumeration_oracle(self):
        w = np.array([0.2, 0.3, 0.5])
        omega = np.full(3, 0.05)
        P = np.exp(z_log_probabilities(omega, w, 10.0, 2.0, 20.0))
        np.testing.assert_allclose(P, enumerate_z(omega, w), rtol=1e-12)
        np.testing.assert_allclose(P.sum(axis=1), 1.0)

    def test_random_oracle(self, rng):
        for _ in range(100):
            K = rng.integers(1, 8)
            w = rng.dirichlet(np.ones(K))
            omega = rng.exponential(2.0, size=K)
            np.testing.assert_allclose(np.exp(z_log_probabilities(omega, w, 10.0, 2.0, 20.0)),
                                       enumerate_z(omega, w), rtol=1e-10, atol=1e-300)

    def test_heavy_tail_goes_to_slab(self):
        P = np.exp(z_log_probabilities(np.full(3, 50.0), [0.2, 0.3, 0.5], 10.0, 2.0, 20.0))
        assert P[0, 0] < 1e-100
        np.testing.assert_allclose(P[2], [0.2, 0.3, 0.5])  # for k = K every stick is a spike

    def test_no_underflow(self):
        P = z_log_probabilities(np.array([1e4, 1e4]), [0.5, 0.5], 10.0, 2.0, 20.0)
        assert np.all(np.isfinite(P[0]))

    def test_crossing_point_gives_prior_weights(self):
        f = lambda x: (stats.expon(scale=0.1).logpdf(x) - stats.lomax(2.0, scale=20.0).logpdf(x))
        x = optimize.brentq(f, 0.0, 5.0)
        w = np.array([0.2, 0.3, 0.5])
        P = np.exp(z_log_probabilities(np.full(3, x), w, 10.0, 2.0, 20.0))
        np.testing.assert_allclose(P, np.tile(w, (3, 1)), rtol=1e-9)

    def test_zero_weight_never_drawn(self, rng):
        gamma = np.array([0.0, 1.0, 0.0])
        for _ in range(200):
            z = gibbs_update_z(rng.exponential(size=3), gamma, np.array([0, 1.0, 1.0]),
                               CSPE(1.0), rng)
            np.testing.assert_array_equal(z, 2)

    def test_draw_frequencies(self, rng):
        omega = np.array([0.05, 0.5, 3.0])
        _, pi = stick_breaking([0.3, 0.4, 1.0])
        gamma = np.array([0.3, 0.28, 0.42])
        P = enumerate_z(omega, gamma)
        draws = np.array([gibbs_update_z(omega, gamma, pi, CSPE(1.0), rng)
                          for _ in range(20_000)])
        for k in range(3):
            freq = np.bincount(draws[:, k] - 1, minlength=3) / len(draws)
            np.testing.assert_allclose(freq, P[k], atol=0.015)

    def test_cumulative_weights_option(self, rng):
        omega = np.array([0.05, 0.5])
        pi = np.array([0.7, 1.0])
        draws = np.array([gibbs_update_z(omega, np.array([0.7, 0.3]), pi,
                                         CSPE(1.0, z_weights="cumulative"), rng)
                          for _ in range(10_000)])
        expected = enumerate_z(omega, pi / pi.sum())[0, 0]
        assert np.mean(draws[:, 0] == 1) == pytest.approx(expected, abs=0.015)


class TestSticks:
    def test_beta_parameters(self):
        a, b = upsilon_posterior_params([1, 1, 3], alpha=2.0)
        np.testing.assert_array_equal(a, [3, 1])
        np.testing.assert_array_equal(b, [3, 3])

    def test_last_stick_fixed(self, rng):
        ups, gamma, pi = gibbs_update_upsilon(np.array([2, 2, 2, 4]), 1.5, rng)
        assert ups[-1] == 1.0 and pi[-1] == pytest.approx(1.0)
        assert gamma.sum() == pytest.approx(1.0)

    def test_upsilon_moments(self, rng):
        z = np.array([1, 2, 2, 3])
        a, b = upsilon_posterior_params(z, 2.0)
        draws = np.array([gibbs_update_upsilon(z, 2.0, rng)[0][:-1] for _ in range(20_000)])
        np.testing.assert_allclose(draws.mean(axis=0), a / (a + b), atol=0.01)


class TestRates:
    def test_spike_fixed(self, rng):
        lam = gibbs_update_lambda(np.array([0.1, 0.2]), np.array([True, False]), CSPE(1.0), rng)
        assert lam[0] == 10.0 and lam[1] != 10.0

    def test_slab_moments(self, rng):
        prior = CSPE(1.0, kappa1=2.0, kappa2=20.0)
        draws = np.array([gibbs_update_lambda(np.array([5.0]), np.array([False]), prior, rng)[0]
                          for _ in range(50_000)])
        assert draws.mean() == pytest.approx(3.0 / 25.0, rel=0.01)
        assert draws.var() == pytest.approx(3.0 / 625.0, rel=0.03)


class TestSSE:
    def test_spike_probability(self):
        prior = SSE()
        omega = np.array([0.05, 40.0])
        p = np.exp(sse_spike_log_probability(omega, np.array([0.5, 0.5]), prior))
        fe = stats.expon(scale=0.1).pdf(omega)
        fl = stats.lomax(2.0, scale=20.0).pdf(omega)
        np.testing.assert_allclose(p, fe / (fe + fl), rtol=1e-12)

    def test_weights_given_membership(self, rng):
        omega = np.array([0.01, 100.0])
        draws = [gibbs_update_sse(omega, np.array([0.5, 0.5]), SSE(), rng) for _ in range(5000)]
        spikes = np.array([d[0] for d in draws])
        pis = np.array([d[1] for d in draws])
        p = np.exp(sse_spike_log_probability(omega, np.array([0.5, 0.5]), SSE()))
        np.testing.assert_allclose(spikes.mean(axis=0), p, atol=0.01)
        # pi | spike ~ Beta(2, 1), pi | slab ~ Beta(1, 2)
        assert pis[spikes].mean() == pytest.approx(2 / 3, abs=0.015)
        assert pis[~spikes].mean() == pytest.approx(1 / 3, abs=0.015)


class TestNoise:
    def test_tau_parameters_example(self):
        shape, rate = tau_posterior_params(np.full((2, 2), np.sqrt(2)), np.zeros((2, 2)),
                                           0.001, 0.001)
        assert (shape, rate) == pytest.approx((2.001, 4.001))

    def test_tau_draw_moments(self, rng):
        Y, theta = rng.standard_normal((5, 4)), np.zeros((5, 4))
        shape, rate = tau_posterior_params(Y, theta, 1.0, 2.0)
        draws = [gibbs_update_tau(Y, theta, 1.0, 2.0, rng) for _ in range(40_000)]
        assert np.mean(draws) == pytest.approx(shape / rate, rel=0.01)


class TestImputation:
    def test_observed_untouched(self, rng):
        Y = rng.standard_normal((3, 3))
        mask = np.ones((3, 3), bool)
        np.testing.assert_array_equal(impute_missing(Y, mask, np.zeros((3, 3)), 1.0, rng), Y)

    def test_precise_noise_returns_theta(self, rng):
        mask = np.array([[True, False], [False, True]])
        theta = np.array([[0.0, 2.0], [3.0, 0.0]])
        out = impute_missing(np.zeros((2, 2)), mask, theta, 1e16, rng)
        np.testing.assert_allclose(out[~mask], [2.0, 3.0], atol=1e-6)

    def test_monte_carlo(self, rng):
        mask = np.array([[True, False]])
        theta = np.array([[0.0, 1.5]])
        vals = np.array([impute_missing(np.zeros((1, 2)), mask, theta, 4.0, rng)[0, 1]
                         for _ in range(40_000)])
        assert vals.mean() == pytest.approx(1.5, abs=0.01)
        assert vals.var() == pytest.approx(0.25, rel=0.03)

    def test_input_not_modified(self, rng):
        Y = np.zeros((2, 2))
        impute_missing(Y, np.zeros((2, 2), bool), np.ones((2, 2)), 1.0, rng)
        np.testing.assert_array_equal(Y, 0.0)
