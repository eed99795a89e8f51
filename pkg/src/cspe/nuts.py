"""No-U-Turn sampler with multinomial trajectory sampling and dual averaging.

Euclidean metric with identity mass matrix.  A target is a numba-jitted
function ``fn(theta, args) -> (logp, grad)`` together with its ``args``
tuple; the trajectory is built inside a single jitted call.

Each transition doubles the trajectory in a random direction until the
trajectory or any of its binary sub-trees makes a U-turn, a leaf's energy
error exceeds ``max_energy_error`` (a divergence), or ``max_tree_depth``
doublings are done.  The tree is built iteratively: sub-tree U-turn checks
use checkpoints stored at the first leaf of each sub-tree, which is
equivalent to the recursive formulation.  States are drawn with weight
exp(-H): uniformly-progressive within the new sub-tree, biased-progressive
when the sub-tree is merged into the trajectory.  A sub-tree that diverges
or turns is discarded whole, so the draw then comes from the part of the
trajectory built before it, which always contains the starting point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np


@dataclass(frozen=True)
class NutsConfig:
    target_accept: float = 0.8
    max_tree_depth: int = 10
    adapt_iterations: int = 2000
    initial_step_size: float | None = None  # None: heuristic search
    seed: int = 0
    max_energy_error: float = 1000.0

    def __post_init__(self):
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")
        if not 1 <= self.max_tree_depth <= 15:
            raise ValueError("max_tree_depth must lie in 1..15")
        if self.adapt_iterations < 0:
            raise ValueError("adapt_iterations must be nonnegative")
        if self.initial_step_size is not None and self.initial_step_size < 0:
            raise ValueError("initial_step_size must be nonnegative")


class Target(NamedTuple):
    fn: object  # numba dispatcher: fn(theta, args) -> (float, ndarray)
    args: tuple

    def __call__(self, theta):
        return self.fn(theta, self.args)


@dataclass
class NutsInfo:
    step_size: float
    accept_stat: float
    tree_depth: int
    n_leapfrog: int
    diverged: bool


class DualAveraging:
    """Step-size adaptation of Hoffman & Gelman (2014), Algorithm 5."""

    def __init__(self, step_size, target_accept, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = math.log(10.0 * step_size)
        self.target = target_accept
        self.gamma, self.t0, self.kappa = gamma, t0, kappa
        self.count = 0
        self.h_bar = 0.0
        self.log_step = math.log(step_size)
        self.log_step_bar = 0.0

    def update(self, accept_stat: float) -> float:
        self.count += 1
        m = self.count
        w = 1.0 / (m + self.t0)
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_stat)
        self.log_step = self.mu - math.sqrt(m) / self.gamma * self.h_bar
        w = m ** -self.kappa
        self.log_step_bar = w * self.log_step + (1.0 - w) * self.log_step_bar
        return math.exp(self.log_step)

    @property
    def final_step_size(self) -> float:
        return math.exp(self.log_step_bar)


@numba.njit(cache=True)
def _leapfrog(fn, args, theta, r, grad, step):
    r_half = r + 0.5 * step * grad
    theta1 = theta + step * r_half
    logp1, grad1 = fn(theta1, args)
    return theta1, r_half + 0.5 * step * grad1, logp1, grad1


@numba.njit(cache=True)
def _energy(logp, r):
    h = -logp + 0.5 * np.dot(r, r)
    if not np.isfinite(h):
        return np.inf
    return h


@numba.njit(cache=True)
def _is_turning(theta_minus, r_minus, theta_plus, r_plus):
    a = 0.0
    b = 0.0
    for i in range(theta_minus.size):
        d = theta_plus[i] - theta_minus[i]
        a += d * r_minus[i]
        b += d * r_plus[i]
    return a < 0.0 or b < 0.0


@numba.njit(cache=True)
def _logaddexp(a, b):
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    m = max(a, b)
    return m + np.log(np.exp(a - m) + np.exp(b - m))


@numba.njit(cache=True)
def nuts_step(fn, args, theta0, logp0, grad0, step, max_depth, max_energy_error, rng):
    """One transition.  Returns (theta, logp, grad, accept_stat, depth, n_leapfrog, diverged)."""
    dim = theta0.size
    r0 = rng.standard_normal(dim)
    h0 = _energy(logp0, r0)

    th_m, r_m, g_m, lp_m = theta0, r0, grad0, logp0
    th_p, r_p, g_p, lp_p = theta0, r0, grad0, logp0
    prop_th, prop_lp, prop_g = theta0, logp0, grad0
    log_w = 0.0
    sum_accept = 0.0
    n_leapfrog = 0
    depth = 0
    diverged = False
    ck_th = np.empty((max_depth + 1, dim))
    ck_r = np.empty((max_depth + 1, dim))

    while depth < max_depth:
        direction = 1 if rng.random() < 0.5 else -1
        if direction == 1:
            th, r, g, lp = th_p, r_p, g_p, lp_p
        else:
            th, r, g, lp = th_m, r_m, g_m, lp_m

        sub_log_w = -np.inf
        sub_th, sub_lp, sub_g = th, lp, g
        sub_turning = False
        sub_diverged = False
        for n in range(1 << depth):
            th, r, lp, g = _leapfrog(fn, args, th, r, g, direction * step)
            n_leapfrog += 1
            delta = h0 - _energy(lp, r)
            if -delta > max_energy_error:
                sub_diverged = True
                break
            sum_accept += np.exp(min(delta, 0.0))
            new_log_w = _logaddexp(sub_log_w, delta)
            if np.log(rng.random()) < delta - new_log_w:
                sub_th, sub_lp, sub_g = th, lp, g
            sub_log_w = new_log_w

            for lev in range(1, depth + 1):
                size = 1 << lev
                if n % size == 0:
                    ck_th[lev] = th
                    ck_r[lev] = r
                elif (n + 1) % size == 0:
                    if direction == 1:
                        turned = _is_turning(ck_th[lev], ck_r[lev], th, r)
                    else:
                        turned = _is_turning(th, r, ck_th[lev], ck_r[lev])
                    if turned:
                        sub_turning = True
                        break
            if sub_turning:
                break

        depth += 1
        if direction == 1:
            th_p, r_p, g_p, lp_p = th, r, g, lp
        else:
            th_m, r_m, g_m, lp_m = th, r, g, lp
        if sub_diverged:
            diverged = True
            break
        if sub_turning:
            break
        if np.log(rng.random()) < sub_log_w - log_w:
            prop_th, prop_lp, prop_g = sub_th, sub_lp, sub_g
        log_w = _logaddexp(log_w, sub_log_w)
        if _is_turning(th_m, r_m, th_p, r_p):
            break

    return prop_th, prop_lp, prop_g, sum_accept / max(n_leapfrog, 1), depth, n_leapfrog, diverged


class NutsSampler:
    """Stateful NUTS kernel: holds the RNG and the step-size adaptation."""

    def __init__(self, config: NutsConfig = NutsConfig(), rng=None):
        self.config = config
        self.rng = np.random.default_rng(config.seed) if rng is None else rng
        self.step_size = config.initial_step_size
        self.adaptation: DualAveraging | None = None

    def find_reasonable_step_size(self, theta, target: Target, logp=None, grad=None) -> float:
        """Double or halve a trial step until one leapfrog's acceptance crosses 1/2."""
        if logp is None:
            logp, grad = target(theta)
        r = self.rng.standard_normal(theta.size)
        h0 = _energy(logp, r)

        def log_accept(step):
            _, r1, lp1, _ = _leapfrog(target.fn, target.args, theta, r, grad, step)
            d = h0 - _energy(lp1, r1)
            return d if math.isfinite(d) else -math.inf

        step = 1.0
        la = log_accept(step)
        a = 1 if la > math.log(0.5) else -1
        for _ in range(100):
            if not a * la > -a * math.log(2.0):
                break
            step *= 2.0**a
            la = log_accept(step)
        return step

    def init_adaptation(self, theta, target: Target, logp=None, grad=None) -> None:
        if self.step_size is None:
            self.step_size = self.find_reasonable_step_size(theta, target, logp, grad)
        if self.step_size > 0:
            self.adaptation = DualAveraging(self.step_size, self.config.target_accept)

    def finish_adaptation(self) -> None:
        if self.adaptation is not None and self.adaptation.count:
            self.step_size = self.adaptation.final_step_size
        self.adaptation = None

    def transition(self, theta, target: Target, logp=None, grad=None, adapt=False):
        """One NUTS move from ``theta``; returns (theta, logp, grad, NutsInfo)."""
        if logp is None:
            logp, grad = target(theta)
        if self.step_size is None:
            self.init_adaptation(theta, target, logp, grad)
        step = self.step_size
        theta, logp, grad, accept_stat, depth, n_leap, diverged = nuts_step(
            target.fn, target.args, np.ascontiguousarray(theta, dtype=np.float64),
            float(logp), np.ascontiguousarray(grad, dtype=np.float64), float(step),
            self.config.max_tree_depth, self.config.max_energy_error, self.rng,
        )
        info = NutsInfo(step, accept_stat, depth, n_leap, diverged)
        if adapt and self.adaptation is not None:
            self.step_size = self.adaptation.update(accept_stat)
        return theta, logp, grad, info


def sample(target: Target, theta0, n_draws, config: NutsConfig = NutsConfig(), rng=None,
           n_warmup=None):
    """Run a plain NUTS chain on a fixed target; returns (draws, list of NutsInfo).

    The first ``n_warmup`` transitions (default ``config.adapt_iterations``)
    adapt the step size and are discarded.
    """
    sampler = NutsSampler(config, rng)
    n_warmup = config.adapt_iterations if n_warmup is None else n_warmup
    theta = np.asarray(theta0, dtype=float)
    logp, grad = target(theta)
    sampler.init_adaptation(theta, target, logp, grad)
    for _ in range(n_warmup):
        theta, logp, grad, _ = sampler.transition(theta, target, logp, grad, adapt=True)
    sampler.finish_adaptation()
    draws = np.empty((n_draws, theta.size))
    infos = []
    for i in range(n_draws):
        theta, logp, grad, info = sampler.transition(theta, target, logp, grad)
        draws[i] = theta
        infos.append(info)
    return draws, infos
