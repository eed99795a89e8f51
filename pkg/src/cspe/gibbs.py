"""Gibbs conditionals for the spike/slab layer, the noise precision and missing cells.

Indicators ``z`` are 1-based: z_k = l means omega_k was assigned to stick
component l, and omega_k is in the spike exactly when z_k <= k.
"""
from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .priors import CSPE, SSE, exponential_logpdf, lomax_logpdf, stick_breaking


def z_log_probabilities(omega, weights, delta, kappa1, kappa2) -> np.ndarray:
    """Normalized log P(z_k = l | rest) as a K x K array (row k, column l).

    Unnormalized weights are ``w_l f_E(omega_k | delta)`` for l <= k and
    ``w_l f_L(omega_k | kappa1, kappa2)`` for l > k.  Normalization is done
    in log space so that tiny densities never underflow to an all-zero row.
    """
    omega = np.asarray(omega, dtype=float)
    K = omega.size
    with np.errstate(divide="ignore"):
        log_w = np.log(np.asarray(weights, dtype=float))
    log_spike = exponential_logpdf(omega, delta)
    log_slab = lomax_logpdf(omega, kappa1, kappa2)
    in_spike = np.arange(K)[None, :] <= np.arange(K)[:, None]
    logits = log_w[None, :] + np.where(in_spike, log_spike[:, None], log_slab[:, None])
    return logits - logsumexp(logits, axis=1, keepdims=True)


def _categorical_rows(log_probs, rng) -> np.ndarray:
    """One draw per row by inverse CDF; returns 0-based column indices."""
    cdf = np.cumsum(np.exp(log_probs), axis=1)
    u = rng.random(log_probs.shape[0]) * cdf[:, -1]
    return np.minimum((u[:, None] >= cdf).sum(axis=1), log_probs.shape[1] - 1)


def gibbs_update_z(omega, gamma, pi, prior: CSPE, rng) -> np.ndarray:
    weights = gamma if prior.z_weights == "stick" else pi
    logp = z_log_probabilities(omega, weights, prior.delta, prior.kappa1, prior.kappa2)
    return _categorical_rows(logp, rng) + 1


def upsilon_posterior_params(z, alpha: float):
    """Beta parameters of upsilon_1..upsilon_{K-1} given the indicators."""
    z = np.asarray(z)
    K = z.size
    ks = np.arange(1, K)
    n_eq = (z[None, :] == ks[:, None]).sum(axis=1)
    n_gt = (z[None, :] > ks[:, None]).sum(axis=1)
    return 1.0 + n_eq, alpha + n_gt


def gibbs_update_upsilon(z, alpha: float, rng):
    """Draw upsilon (last element fixed at 1) and return (upsilon, gamma, pi)."""
    a, b = upsilon_posterior_params(z, alpha)
    upsilon = np.append(rng.beta(a, b), 1.0)
    gamma, pi = stick_breaking(upsilon)
    return upsilon, gamma, pi


def gibbs_update_lambda(omega, spike, prior, rng) -> np.ndarray:
    """lambda_k = delta in the spike, Gamma(kappa1 + 1, kappa2 + omega_k) in the slab."""
    rate = prior.kappa2 + np.asarray(omega, dtype=float)
    slab = rng.gamma(prior.kappa1 + 1.0, 1.0 / rate)
    return np.where(spike, prior.delta, slab)


def sse_spike_log_probability(omega, pi, prior: SSE) -> np.ndarray:
    log_spike = np.log(pi) + exponential_logpdf(omega, prior.delta)
    log_slab = np.log1p(-pi) + lomax_logpdf(omega, prior.kappa1, prior.kappa2)
    return log_spike - np.logaddexp(log_spike, log_slab)


def gibbs_update_sse(omega, pi, prior: SSE, rng):
    """Membership given independent weights, then the weights given membership."""
    with np.errstate(divide="ignore"):
        p_spike = np.exp(sse_spike_log_probability(omega, pi, prior))
    spike = rng.random(p_spike.size) < p_spike
    pi = rng.beta(1.0 + spike, 2.0 - spike)
    return spike, pi


def tau_posterior_params(Y, theta, nu1: float, nu2: float):
    """Shape and rate of the Gamma conditional of tau."""
    resid = np.asarray(Y) - np.asarray(theta)
    return nu1 + 0.5 * resid.size, nu2 + 0.5 * np.sum(resid * resid)


def gibbs_update_tau(Y, theta, nu1: float, nu2: float, rng) -> float:
    shape, rate = tau_posterior_params(Y, theta, nu1, nu2)
    return float(rng.gamma(shape, 1.0 / rate))


def impute_missing(Y, mask, theta, tau: float, rng) -> np.ndarray:
    """Redraw every unobserved cell from N(theta_jt, 1/tau); returns a new array."""
    Y = np.array(Y, dtype=float)
    miss = ~np.asarray(mask, dtype=bool)
    n = int(miss.sum())
    if n:
        Y[miss] = theta[miss] + rng.standard_normal(n) / np.sqrt(tau)
    return Y
