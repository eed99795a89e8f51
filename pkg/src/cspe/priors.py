"""Priors on the singular values and the cumulative-shrinkage stick-breaking.

Five families are supported:

* ``Noninformative``: flat on omega_k >= 0 (contributes nothing to the kernel).
* ``Exponential(chi)``: independent exponential with rate chi.
* ``Lomax(mu1, mu2)``: independent Lomax with shape mu1 and scale mu2.
* ``SSE``: spike-and-slab exponential with independent uniform spike weights.
* ``CSPE``: spike-and-slab exponential whose spike weights follow a
  cumulative stick-breaking process with concentration alpha.

The spike/slab families are scale mixtures of exponentials.  Conditional on
the rates ``lambda`` the kernel sees an exponential density; the spike is a
point mass of the rate at ``delta`` and the slab draws the rate from
Gamma(kappa1, kappa2) (shape, rate), which marginalizes to Lomax(kappa1, kappa2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .factorization import from_increments, prefix_sum

Z_WEIGHT_MODES = ("stick", "cumulative")


def exponential_logpdf(x, rate):
    return np.log(rate) - rate * np.asarray(x, dtype=float)


def lomax_logpdf(x, shape, scale):
    """Log density ``(a/b) (1 + x/b)^-(a+1)``; -inf where ``x <= -scale``."""
    x = np.asarray(x, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.log(shape / scale) - (shape + 1.0) * np.log1p(x / scale)
    return np.where(x > -scale, out, -np.inf)


@dataclass(frozen=True)
class Noninformative:
    uses_rates = False
    has_spike_slab = False

    @property
    def label(self) -> str:
        return "noninformative"

    def kernel_terms(self, omega, rates=None):
        return 0.0, np.zeros_like(omega)


@dataclass(frozen=True)
class Exponential:
    chi: float

    uses_rates = False
    has_spike_slab = False

    def __post_init__(self):
        _check_positive(chi=self.chi)

    @property
    def label(self) -> str:
        return f"exponential(chi={self.chi:g})"

    def kernel_terms(self, omega, rates=None):
        logp = float(np.sum(exponential_logpdf(omega, self.chi)))
        return logp, np.full_like(omega, -self.chi)


@dataclass(frozen=True)
class Lomax:
    mu1: float
    mu2: float

    uses_rates = False
    has_spike_slab = False

    def __post_init__(self):
        _check_positive(mu1=self.mu1, mu2=self.mu2)

    @property
    def label(self) -> str:
        return f"lomax(mu1={self.mu1:g},mu2={self.mu2:g})"

    def kernel_terms(self, omega, rates=None):
        logp = float(np.sum(lomax_logpdf(omega, self.mu1, self.mu2)))
        with np.errstate(divide="ignore"):
            grad = -(self.mu1 + 1.0) / (self.mu2 + omega)
        return logp, grad


@dataclass(frozen=True)
class SSE:
    """Spike-and-slab exponential prior with independent U(0, 1) spike weights."""

    delta: float = 10.0
    kappa1: float = 2.0
    kappa2: float = 20.0

    uses_rates = True
    has_spike_slab = True

    def __post_init__(self):
        _check_positive(delta=self.delta, kappa1=self.kappa1, kappa2=self.kappa2)

    @property
    def label(self) -> str:
        return "sse"

    def kernel_terms(self, omega, rates=None):
        return _conditional_exponential_terms(omega, rates)


@dataclass(frozen=True)
class CSPE:
    """Cumulative shrinkage process exponential prior.

    ``z_weights`` selects the mixture weights of the membership indicators:
    ``"stick"`` uses the stick weights gamma_l (a proper categorical with
    P(z_k <= k) = pi_k); ``"cumulative"`` uses the cumulative pi_l.
    """

    alpha: float
    delta: float = 10.0
    kappa1: float = 2.0
    kappa2: float = 20.0
    z_weights: str = "stick"
    name: str = field(default="cspe", compare=False)

    uses_rates = True
    has_spike_slab = True

    def __post_init__(self):
        _check_positive(
            alpha=self.alpha, delta=self.delta, kappa1=self.kappa1, kappa2=self.kappa2
        )
        if self.z_weights not in Z_WEIGHT_MODES:
            raise ValueError(f"z_weights must be one of {Z_WEIGHT_MODES}")

    @classmethod
    def elicited(cls, q: float, k: int, name: str | None = None, **kwargs) -> "CSPE":
        """CSPE with alpha chosen so that E[pi_k] = q."""
        return cls(alpha=elicit_alpha(q, k), name=name or "cspe", **kwargs)

    @property
    def label(self) -> str:
        return self.name

    def kernel_terms(self, omega, rates=None):
        return _conditional_exponential_terms(omega, rates)


PriorSpec = Noninformative | Exponential | Lomax | SSE | CSPE


def _check_positive(**values):
    for name, v in values.items():
        if not (np.isfinite(v) and v > 0):
            raise ValueError(f"{name} must be strictly positive, got {v}")


def _conditional_exponential_terms(omega, rates):
    if rates is None:
        raise ValueError("spike-and-slab priors need the conditional rates lambda")
    rates = np.asarray(rates, dtype=float)
    return float(np.sum(np.log(rates) - rates * omega)), -rates


def log_density_omega(spec, omega_k: float, rate_k: float | None = None) -> float:
    """Log prior density of a single nonnegative singular value.

    For SSE/CSPE the density is conditional on the exponential rate ``rate_k``.
    The noninformative prior is improper and returns 0.
    """
    if omega_k < 0:
        raise ValueError(f"omega_k must be nonnegative, got {omega_k}")
    if isinstance(spec, Noninformative):
        return 0.0
    if isinstance(spec, Exponential):
        return float(exponential_logpdf(omega_k, spec.chi))
    if isinstance(spec, Lomax):
        return float(lomax_logpdf(omega_k, spec.mu1, spec.mu2))
    if rate_k is None:
        raise ValueError(f"{spec.label} needs rate_k")
    return float(exponential_logpdf(omega_k, rate_k))


def spike_slab_marginal_logpdf(spec, omega, pi_k):
    """Log density of omega_k with lambda_k integrated out, given spike weight ``pi_k``.

    The mixture is pi_k Exp(delta) + (1 - pi_k) Lomax(kappa1, kappa2).
    """
    omega = np.asarray(omega, dtype=float)
    with np.errstate(divide="ignore"):
        log_spike = np.log(pi_k) + exponential_logpdf(omega, spec.delta)
        log_slab = np.log1p(-np.asarray(pi_k, dtype=float)) + lomax_logpdf(
            omega, spec.kappa1, spec.kappa2)
    return np.logaddexp(log_spike, log_slab)


def log_prior_and_grad_omega_star(spec, omega_star, rates=None):
    """Sum of log p(omega_k) with omega = C^{-1} omega_star, and its gradient.

    The gradient is taken in omega_star coordinates: the omega-gradient is
    pulled back with ``C^{-T}``, a prefix sum.
    """
    omega_star = np.asarray(omega_star, dtype=float)
    logp, grad_omega = spec.kernel_terms(from_increments(omega_star), rates)
    return logp, prefix_sum(grad_omega)


def stick_breaking(upsilon):
    """Return the stick weights gamma and their cumulative sums pi."""
    upsilon = np.asarray(upsilon, dtype=float)
    if np.any((upsilon < 0) | (upsilon > 1)):
        raise ValueError("upsilon must lie in [0, 1]")
    remaining = np.concatenate(([1.0], np.cumprod(1.0 - upsilon[:-1])))
    gamma = upsilon * remaining
    return gamma, np.cumsum(gamma)


def expected_pi(alpha: float, k) -> float:
    """Prior mean of the cumulative spike weight pi_k."""
    return 1.0 - (alpha / (1.0 + alpha)) ** np.asarray(k, dtype=float)


def elicit_alpha(q: float, k: int) -> float:
    """Concentration alpha for which E[pi_k] equals ``q``."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    if k < 1:
        raise ValueError(f"k must be a positive integer, got {k}")
    r = math.exp(math.log1p(-q) / k)
    return r / (1.0 - r)


@dataclass
class SpikeSlabState:
    """Latent spike/slab variables of the SSE and CSPE priors.

    ``spike[k]`` marks rate lambda_k pinned at delta.  Under CSPE it equals
    ``z[k] <= k + 1`` (z is stored 1-based to match the indicator's range);
    under SSE the membership is drawn directly and ``z`` is unused.
    """

    z: np.ndarray
    upsilon: np.ndarray
    gamma: np.ndarray
    pi: np.ndarray
    lam: np.ndarray
    spike: np.ndarray

    @classmethod
    def from_upsilon(cls, upsilon, z, lam) -> "SpikeSlabState":
        z = np.asarray(z, dtype=int)
        gamma, pi = stick_breaking(upsilon)
        spike = z <= np.arange(1, z.size + 1)
        return cls(z, np.asarray(upsilon, dtype=float), gamma, pi,
                   np.asarray(lam, dtype=float), spike)

    def copy(self) -> "SpikeSlabState":
        return SpikeSlabState(*(np.array(a) for a in
                                (self.z, self.upsilon, self.gamma, self.pi, self.lam, self.spike)))


def sample_prior_spike_slab(spec, K: int, rng) -> SpikeSlabState:
    """Forward draw of (upsilon, z, lambda) or (pi, spike, lambda) from the prior."""
    if isinstance(spec, CSPE):
        upsilon = np.append(rng.beta(1.0, spec.alpha, size=K - 1), 1.0)
        gamma, pi = stick_breaking(upsilon)
        w = gamma if spec.z_weights == "stick" else pi
        z = rng.choice(K, size=K, p=w / w.sum()) + 1
        spike = z <= np.arange(1, K + 1)
        upsilon_, gamma_, pi_ = upsilon, gamma, pi
    elif isinstance(spec, SSE):
        pi_ = rng.uniform(size=K)
        spike = rng.uniform(size=K) < pi_
        z = np.where(spike, 1, K)
        upsilon_ = gamma_ = np.full(K, np.nan)
    else:
        raise TypeError(f"{spec!r} has no spike-and-slab layer")
    lam = np.where(spike, spec.delta, rng.gamma(spec.kappa1, 1.0 / spec.kappa2, size=K))
    return SpikeSlabState(z, upsilon_, gamma_, pi_, lam, spike)


def standard_prior_grid(K: int) -> list:
    """The comparison grid: flat, three exponentials, three Lomax, SSE, two CSPE."""
    return [
        Noninformative(),
        Exponential(1.0),
        Exponential(0.5),
        Exponential(0.1),
        Lomax(2.0, 2.0),
        Lomax(2.0, 5.0),
        Lomax(2.0, 20.0),
        SSE(),
        CSPE.elicited(0.5, K - 1, name="cspe-conservative"),
        CSPE.elicited(0.9, K - 1, name="cspe-aggressive"),
    ]
