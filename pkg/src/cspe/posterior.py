"""Relaxed log posterior of theta = (vec Phi, vec Psi, omega_star) and its gradient.

The orthonormality of Phi, Psi and the nonnegativity of omega_star are
replaced by smooth penalties

    log iota(X) = -eta1 * ||X^T X - I||_F^2
    log rho(w)  = -sum_k log(1 + exp(-eta2 * w_k))

whose strengths follow an increasing schedule during warm-up.  ``vec`` is
column-major throughout, so ``theta[:J*K]`` holds Phi column by column.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy.special import expit

from .factorization import Factorization, from_increments, prefix_sum, to_increments
from .nuts import Target
from .priors import Exponential, Lomax, Noninformative, log_prior_and_grad_omega_star

UPSILON_MEMORY_BUDGET = 64 * 2**20  # bytes


@dataclass(frozen=True)
class RelaxationSchedule:
    eta_bar1: float = 1e3
    eta_bar2: float = 1e3
    a_eta: float = 0.5
    b_eta: float = 0.1

    def __post_init__(self):
        if not (self.eta_bar1 > 0 and self.eta_bar2 > 0 and self.b_eta > 0):
            raise ValueError("eta_bar1, eta_bar2 and b_eta must be positive")
        if not 0 < self.a_eta < 1:
            raise ValueError("a_eta must lie in (0, 1)")

    def eta(self, i: int) -> tuple[float, float]:
        return relaxation_eta(self, i, 1), relaxation_eta(self, i, 2)


def relaxation_eta(schedule: RelaxationSchedule, i: int, l: int) -> float:
    """Penalty strength at iteration ``i`` for constraint set ``l`` (1 or 2).

    Rises like a scaled exponential CDF, reaching ``a_eta * eta_bar`` at
    iteration ``b_eta * eta_bar``, and is clamped at ``eta_bar`` once
    ``i >= eta_bar``.
    """
    eta_bar = {1: schedule.eta_bar1, 2: schedule.eta_bar2}[l]
    if i >= eta_bar:
        return float(eta_bar)
    rate = np.log1p(-schedule.a_eta) / (schedule.b_eta * eta_bar)
    return float(-eta_bar * np.expm1(rate * i))


@dataclass(frozen=True)
class KernelContext:
    """Everything the theta-update conditions on.

    ``Y`` is the completed data matrix (missing cells hold their current
    imputations).  ``rates`` are the exponential rates lambda for SSE/CSPE
    and may be None otherwise.
    """

    Y: np.ndarray
    tau: float
    eta1: float
    eta2: float
    prior: object
    rates: np.ndarray | None = None

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.eta1 < 0 or self.eta2 < 0:
            raise ValueError("eta1 and eta2 must be nonnegative")

    @property
    def shape(self) -> tuple[int, int]:
        return self.Y.shape


def pack(phi, psi, omega_star) -> np.ndarray:
    return np.concatenate((phi.ravel(order="F"), psi.ravel(order="F"), omega_star))


def unpack(theta, J: int, T: int, K: int):
    phi = theta[: J * K].reshape((J, K), order="F")
    psi = theta[J * K : (J + T) * K].reshape((T, K), order="F")
    return phi, psi, theta[(J + T) * K :]


def n_params(J: int, T: int, K: int) -> int:
    return J * K + T * K + K


def infer_rank(theta, J: int, T: int) -> int:
    K, rem = divmod(theta.size, J + T + 1)
    if rem:
        raise ValueError(f"theta of length {theta.size} does not fit J={J}, T={T}")
    return K


def theta_from_factorization(f: Factorization) -> np.ndarray:
    return pack(f.phi, f.psi, to_increments(f.omega))


def factorization_from_theta(theta, J: int, T: int) -> Factorization:
    phi, psi, ws = unpack(theta, J, T, infer_rank(theta, J, T))
    return Factorization(phi.copy(), from_increments(ws), psi.copy())


PRIOR_NONE, PRIOR_RATES, PRIOR_LOMAX, PRIOR_CONSTANT_RATE = 0, 1, 2, 3


def prior_code(prior, rates):
    """Encode the omega prior for the jitted kernel as (code, params, rates)."""
    empty = np.zeros(0)
    if isinstance(prior, Noninformative):
        return PRIOR_NONE, np.zeros(2), empty
    if isinstance(prior, Lomax):
        return PRIOR_LOMAX, np.array([prior.mu1, prior.mu2]), empty
    if isinstance(prior, Exponential):
        return PRIOR_CONSTANT_RATE, np.array([prior.chi, 0.0]), empty
    if rates is None:
        raise ValueError(f"{prior.label} needs the conditional rates lambda")
    return PRIOR_RATES, np.zeros(2), np.ascontiguousarray(rates, dtype=np.float64)


def kernel_target(ctx: KernelContext) -> Target:
    """Jitted NUTS target computing the same quantity as ``log_kernel``."""
    code, params, rates = prior_code(ctx.prior, ctx.rates)
    args = (np.ascontiguousarray(ctx.Y, dtype=np.float64), float(ctx.tau), float(ctx.eta1),
            float(ctx.eta2), code, params, rates)
    return Target(_kernel_jit, args)


@numba.njit(cache=True)
def _softplus(x):
    if x > 0.0:
        return x + np.log1p(np.exp(-x))
    return np.log1p(np.exp(x))


@numba.njit(cache=True)
def _expit(x):
    if x >= 0.0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


@numba.njit(cache=True)
def _kernel_jit(theta, args):
    Y, tau, eta1, eta2, code, params, rates = args
    J, T = Y.shape
    K = theta.size // (J + T + 1)
    o_psi = J * K
    o_ws = (J + T) * K
    grad = np.zeros(theta.size)

    omega = np.empty(K)
    acc = 0.0
    for k in range(K - 1, -1, -1):
        acc += theta[o_ws + k]
        omega[k] = acc

    # likelihood
    resid = Y.copy()
    for k in range(K):
        w = omega[k]
        for t in range(T):
            c = w * theta[o_psi + k * T + t]
            for j in range(J):
                resid[j, t] -= theta[k * J + j] * c
    ss = 0.0
    for t in range(T):
        for j in range(J):
            ss += resid[j, t] * resid[j, t]
    logp = -0.5 * tau * ss + 0.5 * J * T * np.log(tau / (2.0 * np.pi))

    g_omega = np.zeros(K)
    for k in range(K):
        w = omega[k]
        gk = 0.0
        for t in range(T):
            psi_tk = theta[o_psi + k * T + t]
            r_phi = 0.0
            for j in range(J):
                rv = resid[j, t]
                phi_jk = theta[k * J + j]
                grad[k * J + j] += tau * w * rv * psi_tk
                r_phi += rv * phi_jk
            grad[o_psi + k * T + t] += tau * w * r_phi
            gk += r_phi * psi_tk
        g_omega[k] = tau * gk

    # orthonormality penalties on Phi (offset 0, n rows J) and Psi (offset J*K, n rows T)
    D = np.empty((K, K))
    for block in range(2):
        off = 0 if block == 0 else o_psi
        n = J if block == 0 else T
        pen = 0.0
        for a in range(K):
            for b in range(a, K):
                s = 0.0
                for i in range(n):
                    s += theta[off + a * n + i] * theta[off + b * n + i]
                if a == b:
                    s -= 1.0
                D[a, b] = s
                D[b, a] = s
                pen += s * s if a == b else 2.0 * s * s
        logp -= eta1 * pen
        for a in range(K):
            for i in range(n):
                s = 0.0
                for b in range(K):
                    s += theta[off + b * n + i] * D[b, a]
                grad[off + a * n + i] -= 4.0 * eta1 * s

    # sigmoid relaxation of omega_star >= 0
    for k in range(K):
        x = theta[o_ws + k]
        logp -= _softplus(-eta2 * x)
        grad[o_ws + k] += eta2 * _expit(-eta2 * x)

    # prior on omega, pulled back to omega_star by a prefix sum
    if code == 1 or code == 3:
        for k in range(K):
            rate = rates[k] if code == 1 else params[0]
            logp += np.log(rate) - rate * omega[k]
            g_omega[k] -= rate
    elif code == 2:
        a_, b_ = params[0], params[1]
        for k in range(K):
            if omega[k] <= -b_:
                logp = -np.inf
                break
            logp += np.log(a_ / b_) - (a_ + 1.0) * np.log1p(omega[k] / b_)
            g_omega[k] -= (a_ + 1.0) / (b_ + omega[k])

    acc = 0.0
    for k in range(K):
        acc += g_omega[k]
        grad[o_ws + k] += acc
    return logp, grad


def log_kernel_and_grad(theta, ctx: KernelContext):
    """Log kernel and gradient in one pass (jitted; the sampler's hot path)."""
    target = kernel_target(ctx)
    return target(np.ascontiguousarray(theta, dtype=np.float64))


def log_kernel(theta, ctx: KernelContext) -> float:
    """Relaxed log posterior kernel of theta, including the Gaussian normalizer."""
    Y = ctx.Y
    J, T = Y.shape
    phi, psi, ws = unpack(theta, J, T, infer_rank(theta, J, T))
    omega = from_increments(ws)
    resid = Y - (phi * omega) @ psi.T
    K = omega.size
    eye = np.eye(K)
    return float(
        -0.5 * ctx.tau * np.sum(resid**2)
        + 0.5 * J * T * np.log(ctx.tau / (2 * np.pi))
        - ctx.eta1 * np.sum((phi.T @ phi - eye) ** 2)
        - ctx.eta1 * np.sum((psi.T @ psi - eye) ** 2)
        - np.sum(np.logaddexp(0.0, -ctx.eta2 * ws))
        + log_prior_and_grad_omega_star(ctx.prior, ws, ctx.rates)[0]
    )


def upsilon_matrix(phi, psi) -> np.ndarray:
    """(J*T) x K matrix whose columns are vec(phi_k psi_k^T), times C^{-1}."""
    B = np.einsum("jk,tk->tjk", phi, psi).reshape(-1, phi.shape[1])
    return np.cumsum(B, axis=1)


def grad_log_kernel(theta, ctx: KernelContext, memory_budget=UPSILON_MEMORY_BUDGET):
    """Gradient of ``log_kernel`` assembled block by block.

    Phi: -tau (-Y Psi W + Phi W Psi^T Psi W) - 4 eta1 (Phi Phi^T Phi - Phi)
    Psi: -tau (-Y^T Phi W + Psi W Phi^T Phi W) - 4 eta1 (Psi Psi^T Psi - Psi)
    omega_star: -tau (-U^T vec Y + U^T U omega_star) - C^{-T} lambda + grad log rho

    with W = diag(omega) and U = [vec(phi_1 psi_1^T), ...] C^{-1}.  U is built
    densely when it fits ``memory_budget`` bytes; otherwise U^T U and
    U^T vec Y are obtained from (Phi^T Phi) * (Psi^T Psi) and diag(Phi^T Y Psi).
    """
    Y = ctx.Y
    J, T = Y.shape
    K = infer_rank(theta, J, T)
    phi, psi, ws = unpack(theta, J, T, K)
    omega = from_increments(ws)
    W = np.diag(omega)
    tau, eta1, eta2 = ctx.tau, ctx.eta1, ctx.eta2

    g_phi = -tau * (-Y @ psi @ W + phi @ W @ psi.T @ psi @ W) - 4 * eta1 * (
        phi @ (phi.T @ phi) - phi
    )
    g_psi = -tau * (-Y.T @ phi @ W + psi @ W @ phi.T @ phi @ W) - 4 * eta1 * (
        psi @ (psi.T @ psi) - psi
    )

    if J * T * K * 8 <= memory_budget:
        U = upsilon_matrix(phi, psi)
        uty = U.T @ Y.ravel(order="F")
        utu = U.T @ U
    else:
        uty = prefix_sum(np.einsum("jk,jt,tk->k", phi, Y, psi))
        gram = (phi.T @ phi) * (psi.T @ psi)
        utu = np.cumsum(np.cumsum(gram, axis=0), axis=1)
    g_ws = -tau * (-uty + utu @ ws) + eta2 * expit(-eta2 * ws)
    g_ws = g_ws + log_prior_and_grad_omega_star(ctx.prior, ws, ctx.rates)[1]
    return np.concatenate((g_phi.ravel(order="F"), g_psi.ravel(order="F"), g_ws))


def column_signs(X) -> np.ndarray:
    """Sign of the first nonzero entry of each column (+1 for a zero column)."""
    nz = X != 0
    first = np.argmax(nz, axis=0)
    vals = X[first, np.arange(X.shape[1])]
    return np.where(vals < 0, -1.0, 1.0)


def align_signs(current: Factorization, reference_signs) -> Factorization:
    """Flip columns of Phi and Psi whose leading sign differs from the reference."""
    flip = column_signs(current.phi) * np.asarray(reference_signs)
    return Factorization(current.phi * flip, current.omega, current.psi * flip)


def align_theta_signs(theta, J: int, T: int, reference_signs) -> np.ndarray:
    """In-place-free version of ``align_signs`` on a packed theta vector."""
    K = infer_rank(theta, J, T)
    phi, psi, ws = unpack(theta, J, T, K)
    flip = column_signs(phi) * reference_signs
    if np.all(flip > 0):
        return theta
    return pack(phi * flip, psi * flip, ws)
