"""Hybrid NUTS-within-Gibbs posterior simulator.

One iteration performs, in order:

1. set the penalty strengths eta1, eta2 from the relaxation schedule;
2. move theta = (vec Phi, vec Psi, omega_star) with one NUTS transition,
   then flip column signs of Phi and Psi to match the initial state;
3. draw the indicators z (CSPE) or the spike memberships (SSE);
4. draw upsilon and recompute the stick weights (CSPE) or the weights pi (SSE);
5. draw the exponential rates lambda;
6. draw the noise precision tau;
7. redraw the missing cells of Y.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field, replace
import numpy as np

from . import gibbs
from .errors import SamplerError
from .factorization import ObservedMatrix, from_increments, max_rank
from .nuts import NutsConfig, NutsSampler
from .posterior import (
    KernelContext,
    RelaxationSchedule,
    align_theta_signs,
    column_signs,
    kernel_target,
    pack,
    unpack,
)
from .priors import CSPE, SSE, Exponential, SpikeSlabState, sample_prior_spike_slab

DIVERGENCE_WARN_RATE = 0.1


@dataclass(frozen=True)
class ChainConfig:
    """Sampler settings; defaults reproduce the 12,000 / last-10,000 protocol."""

    iterations: int = 12000
    burn_in: int = 2000
    thin: int = 1
    seed: int = 0
    nu1: float = 1e-3
    nu2: float = 1e-3
    nuts: NutsConfig = field(default_factory=NutsConfig)
    schedule: RelaxationSchedule = field(default_factory=RelaxationSchedule)
    store_factors: bool = False
    # Test hooks: hold tau fixed, or skip the theta update entirely.
    fixed_tau: float | None = None
    freeze_theta: bool = False

    def __post_init__(self):
        if self.iterations <= self.burn_in or self.burn_in < 0:
            raise ValueError("need iterations > burn_in >= 0")
        if self.thin < 1:
            raise ValueError("thin must be a positive integer")
        if not (self.nu1 > 0 and self.nu2 > 0):
            raise ValueError("nu1 and nu2 must be positive")

    @property
    def n_retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


@dataclass
class ChainState:
    theta: np.ndarray
    tau: float
    spike_slab: SpikeSlabState | None
    Y: np.ndarray  # completed data
    iteration: int = 0
    logp: float | None = None
    grad: np.ndarray | None = None

    def omega(self, J: int, T: int) -> np.ndarray:
        K = self.theta.size // (J + T + 1)
        return from_increments(self.theta[-K:])

    def theta_matrix(self, J: int, T: int) -> np.ndarray:
        K = self.theta.size // (J + T + 1)
        phi, psi, ws = unpack(self.theta, J, T, K)
        return (phi * from_increments(ws)) @ psi.T

    def rates(self, prior):
        if self.spike_slab is not None:
            return self.spike_slab.lam
        return None


@dataclass
class DrawStore:
    """Retained draws of one chain plus per-iteration sampler diagnostics."""

    J: int
    T: int
    K: int
    prior_label: str
    iteration: np.ndarray
    omega: np.ndarray
    omega_star: np.ndarray
    tau: np.ndarray
    lam: np.ndarray
    z: np.ndarray
    pi: np.ndarray
    unitarity: np.ndarray  # columns: ||Phi^T Phi - I||_F, ||Psi^T Psi - I||_F
    theta_mean: np.ndarray
    phi: np.ndarray | None = None
    psi: np.ndarray | None = None
    step_size: np.ndarray | None = None
    n_leapfrog: np.ndarray | None = None
    accept_stat: np.ndarray | None = None
    diverged: np.ndarray | None = None
    warmup: int = 0
    elapsed: float = 0.0

    @property
    def n_draws(self) -> int:
        return self.iteration.size

    @property
    def divergence_rate(self) -> float:
        post = self.diverged[self.warmup :]
        return float(post.mean()) if post.size else 0.0

    def omega_mean(self) -> np.ndarray:
        return self.omega.mean(axis=0)


def initial_state(data: ObservedMatrix, prior, K: int, rng) -> tuple[ChainState, np.ndarray]:
    """Truncated-SVD start; returns the state and the reference column signs."""
    Y = data.filled(0.0)
    U, s, Vt = np.linalg.svd(Y, full_matrices=False)
    phi, omega, psi = U[:, :K], s[:K], Vt[:K].T
    resid = Y - (phi * omega) @ psi.T
    tau = 1.0 / max(float(np.mean(resid**2)), 1e-10)
    ws = np.append(omega[:-1] - omega[1:], omega[-1])
    theta = pack(phi, psi, ws)

    spike_slab = None
    if isinstance(prior, CSPE):
        draw = sample_prior_spike_slab(prior, K, rng)
        z = np.full(K, K)
        spike = z <= np.arange(1, K + 1)
        lam = np.where(spike, prior.delta, prior.kappa1 / prior.kappa2)
        spike_slab = SpikeSlabState(z, draw.upsilon, draw.gamma, draw.pi, lam, spike)
    elif isinstance(prior, SSE):
        pi = rng.uniform(size=K)
        spike = np.zeros(K, dtype=bool)
        lam = np.full(K, prior.kappa1 / prior.kappa2)
        spike_slab = SpikeSlabState(np.full(K, K), np.full(K, np.nan), np.full(K, np.nan),
                                    pi, lam, spike)
    return ChainState(theta, tau, spike_slab, Y), column_signs(phi)


def gibbs_sweep(state: ChainState, prior, omega, rng) -> None:
    """Steps 3-5 of the cycle, updating ``state.spike_slab`` in place."""
    ss = state.spike_slab
    if isinstance(prior, CSPE):
        ss.z = gibbs.gibbs_update_z(omega, ss.gamma, ss.pi, prior, rng)
        ss.spike = ss.z <= np.arange(1, omega.size + 1)
        ss.upsilon, ss.gamma, ss.pi = gibbs.gibbs_update_upsilon(ss.z, prior.alpha, rng)
        ss.lam = gibbs.gibbs_update_lambda(omega, ss.spike, prior, rng)
    elif isinstance(prior, SSE):
        ss.spike, ss.pi = gibbs.gibbs_update_sse(omega, ss.pi, prior, rng)
        ss.lam = gibbs.gibbs_update_lambda(omega, ss.spike, prior, rng)


def cycle(state: ChainState, mask, prior, config: ChainConfig, nuts: NutsSampler, i: int,
          ref_signs, rng, eta=None):
    """One pass of the seven-step cycle, updating ``state`` in place.

    ``eta`` overrides the schedule's (eta1, eta2).  Returns the NUTS info
    (None when theta is frozen) and (phi, psi, omega_star, omega, Theta).
    """
    J, T = state.Y.shape
    K = state.theta.size // (J + T + 1)
    state.iteration = i
    eta1, eta2 = config.schedule.eta(i) if eta is None else eta
    info = None
    if not config.freeze_theta:
        target = kernel_target(
            KernelContext(state.Y, state.tau, eta1, eta2, prior, state.rates(prior)))
        logp, grad = target(state.theta)
        if i == 1 or nuts.step_size is None:
            if not np.isfinite(logp):
                raise SamplerError("log kernel is not finite at the initial state")
            nuts.init_adaptation(state.theta, target, logp, grad)
        adapt = i <= config.nuts.adapt_iterations
        theta, _, _, info = nuts.transition(state.theta, target, logp, grad, adapt=adapt)
        if i == config.nuts.adapt_iterations:
            nuts.finish_adaptation()
        state.theta = align_theta_signs(theta, J, T, ref_signs)

    phi, psi, ws = unpack(state.theta, J, T, K)
    omega = from_increments(ws)
    theta_mat = (phi * omega) @ psi.T
    if state.spike_slab is not None:
        gibbs_sweep(state, prior, omega, rng)
    if config.fixed_tau is None:
        state.tau = gibbs.gibbs_update_tau(state.Y, theta_mat, config.nu1, config.nu2, rng)
    state.Y = gibbs.impute_missing(state.Y, mask, theta_mat, state.tau, rng)
    return info, (phi, psi, ws, omega, theta_mat)


def run_chain(data: ObservedMatrix, prior, config: ChainConfig = ChainConfig(),
              K: int | None = None, init: ChainState | None = None,
              reference_signs=None) -> DrawStore:
    """Simulate the posterior of the factorization of ``data`` under ``prior``."""
    J, T = data.J, data.T
    K = max_rank(J, T) if K is None else K
    if not 1 <= K <= max_rank(J, T):
        raise ValueError(f"K={K} must lie in 1..max_rank({J}, {T})={max_rank(J, T)}")

    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    if init is None:
        state, ref_signs = initial_state(data, prior, K, rng)
    else:
        state = replace(init, spike_slab=init.spike_slab.copy() if init.spike_slab else None)
        ref_signs = column_signs(unpack(state.theta, J, T, K)[0])
    if reference_signs is not None:
        ref_signs = np.asarray(reference_signs, dtype=float)
    if config.fixed_tau is not None:
        state.tau = float(config.fixed_tau)

    nuts = NutsSampler(config.nuts, rng)
    n_keep = config.n_retained
    n_iter = config.iterations
    omega_draws = np.empty((n_keep, K))
    ws_draws = np.empty((n_keep, K))
    tau_draws = np.empty(n_keep)
    lam_draws = np.full((n_keep, K), np.nan)
    z_draws = np.zeros((n_keep, K), dtype=int)
    pi_draws = np.full((n_keep, K), np.nan)
    unit_draws = np.empty((n_keep, 2))
    iter_draws = np.empty(n_keep, dtype=int)
    phi_draws = np.empty((n_keep, J, K)) if config.store_factors else None
    psi_draws = np.empty((n_keep, T, K)) if config.store_factors else None
    theta_sum = np.zeros((J, T))
    step_sizes = np.zeros(n_iter)
    n_leapfrog = np.zeros(n_iter, dtype=int)
    accept = np.zeros(n_iter)
    diverged = np.zeros(n_iter, dtype=bool)
    eye = np.eye(K)
    exp_rates = np.full(K, prior.chi) if isinstance(prior, Exponential) else None

    started = time.perf_counter()
    slot = 0
    for i in range(1, n_iter + 1):
        info, (phi, psi, ws, omega, theta_mat) = cycle(
            state, data.mask, prior, config, nuts, i, ref_signs, rng)
        if info is not None:
            step_sizes[i - 1] = info.step_size
            n_leapfrog[i - 1] = info.n_leapfrog
            accept[i - 1] = info.accept_stat
            diverged[i - 1] = info.diverged

        if i > config.burn_in and (i - config.burn_in) % config.thin == 0 and slot < n_keep:
            iter_draws[slot] = i
            omega_draws[slot] = omega
            ws_draws[slot] = ws
            tau_draws[slot] = state.tau
            if state.spike_slab is not None:
                lam_draws[slot] = state.spike_slab.lam
                z_draws[slot] = state.spike_slab.z
                pi_draws[slot] = state.spike_slab.pi
            elif exp_rates is not None:
                lam_draws[slot] = exp_rates
            unit_draws[slot] = (np.linalg.norm(phi.T @ phi - eye),
                                np.linalg.norm(psi.T @ psi - eye))
            if phi_draws is not None:
                phi_draws[slot] = phi
                psi_draws[slot] = psi
            theta_sum += theta_mat
            slot += 1

    store = DrawStore(
        J=J, T=T, K=K, prior_label=prior.label,
        iteration=iter_draws, omega=omega_draws, omega_star=ws_draws, tau=tau_draws,
        lam=lam_draws, z=z_draws, pi=pi_draws, unitarity=unit_draws,
        theta_mean=theta_sum / max(n_keep, 1), phi=phi_draws, psi=psi_draws,
        step_size=step_sizes, n_leapfrog=n_leapfrog, accept_stat=accept,
        diverged=diverged, warmup=config.nuts.adapt_iterations,
        elapsed=time.perf_counter() - started,
    )
    if not config.freeze_theta and store.divergence_rate > DIVERGENCE_WARN_RATE:
        warnings.warn(
            f"{store.divergence_rate:.1%} of post-warm-up transitions diverged "
            f"({prior.label}, seed {config.seed})",
            RuntimeWarning,
            stacklevel=2,
        )
    return store
