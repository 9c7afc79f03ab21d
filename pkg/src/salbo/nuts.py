"""No-U-Turn sampler with dual-averaging step size and diagonal metric.

Self-contained: the target is any callable z -> (log density, gradient).
A single chain is run; all randomness flows through one Generator, so a
fixed seed reproduces the draws exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

DELTA_MAX = 1000.0


@dataclass
class NutsInfo:
    """Diagnostics for one chain."""

    step_size: float
    accept_mean: float
    divergences: int
    divergence_rate: float
    num_draws: int


def _leapfrog(target, z, p, grad, eps, m_inv):
    p_half = p + 0.5 * eps * grad
    z_new = z + eps * m_inv * p_half
    logp_new, grad_new = target(z_new)
    p_new = p_half + 0.5 * eps * grad_new
    return z_new, p_new, logp_new, grad_new


def _joint(logp, p, m_inv):
    if not np.isfinite(logp):
        return -np.inf
    return logp - 0.5 * np.sum(p * p * m_inv)


def _find_reasonable_eps(target, z, logp, grad, m_inv, rng):
    eps = 1.0
    p = rng.standard_normal(z.shape[0]) / np.sqrt(m_inv)
    joint0 = _joint(logp, p, m_inv)
    _, p1, logp1, _ = _leapfrog(target, z, p, grad, eps, m_inv)
    log_ratio = _joint(logp1, p1, m_inv) - joint0
    if not np.isfinite(log_ratio):
        log_ratio = -np.inf
    direction = 1.0 if log_ratio > np.log(0.5) else -1.0
    for _ in range(100):
        eps *= 2.0**direction
        _, p1, logp1, _ = _leapfrog(target, z, p, grad, eps, m_inv)
        log_ratio = _joint(logp1, p1, m_inv) - joint0
        if not np.isfinite(log_ratio):
            log_ratio = -np.inf
        if direction * log_ratio <= direction * np.log(0.5):
            break
        if eps > 1e7 or eps < 1e-10:
            break
    return max(min(eps, 1e7), 1e-10)


class _DualAveraging:
    """Nesterov dual averaging toward a target acceptance rate."""

    def __init__(self, eps0, delta=0.8, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = np.log(10.0 * eps0)
        self.delta = delta
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.t = 0
        self.h_bar = 0.0
        self.log_eps = np.log(eps0)
        self.log_eps_bar = 0.0

    def update(self, accept_frac):
        self.t += 1
        eta = 1.0 / (self.t + self.t0)
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.delta - accept_frac)
        self.log_eps = self.mu - np.sqrt(self.t) / self.gamma * self.h_bar
        w = self.t**-self.kappa
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar

    @property
    def eps(self):
        return float(np.exp(self.log_eps))

    @property
    def eps_final(self):
        return float(np.exp(self.log_eps_bar))


def _build_tree(target, state, log_u, direction, depth, eps, joint0, m_inv, rng):
    """Recursively double the trajectory; returns edge states and proposal."""
    z, p, logp, grad = state
    if depth == 0:
        z1, p1, logp1, grad1 = _leapfrog(target, z, p, grad, direction * eps, m_inv)
        joint1 = _joint(logp1, p1, m_inv)
        n1 = int(log_u <= joint1)
        div = log_u >= joint1 + DELTA_MAX
        leaf = (z1, p1, logp1, grad1)
        alpha = min(1.0, np.exp(min(joint1 - joint0, 0.0)))
        return leaf, leaf, leaf, n1, int(not div), alpha, 1, div
    minus, plus, prop, n1, s1, alpha, n_alpha, div = _build_tree(
        target, state, log_u, direction, depth - 1, eps, joint0, m_inv, rng
    )
    if s1 == 1:
        if direction == -1:
            minus, _, prop2, n2, s2, alpha2, n_alpha2, div2 = _build_tree(
                target, minus, log_u, direction, depth - 1, eps, joint0, m_inv, rng
            )
        else:
            _, plus, prop2, n2, s2, alpha2, n_alpha2, div2 = _build_tree(
                target, plus, log_u, direction, depth - 1, eps, joint0, m_inv, rng
            )
        if n2 > 0 and rng.uniform() < n2 / max(n1 + n2, 1):
            prop = prop2
        alpha += alpha2
        n_alpha += n_alpha2
        div = div or div2
        s1 = s2 * _no_uturn(minus, plus, m_inv)
        n1 += n2
    return minus, plus, prop, n1, s1, alpha, n_alpha, div


def _no_uturn(minus, plus, m_inv):
    dz = plus[0] - minus[0]
    return int((dz @ (m_inv * minus[1]) >= 0) and (dz @ (m_inv * plus[1]) >= 0))


def _transition(target, state, eps, m_inv, max_depth, rng):
    z, _, logp, grad = state
    dim = z.shape[0]
    p0 = rng.standard_normal(dim) / np.sqrt(m_inv)
    joint0 = _joint(logp, p0, m_inv)
    log_u = joint0 + np.log(max(rng.uniform(), 1e-300))
    minus = plus = (z, p0, logp, grad)
    prop = (z, p0, logp, grad)
    n, s, depth = 1, 1, 0
    alpha_sum, n_alpha_sum = 0.0, 0
    divergent = False
    while s == 1 and depth < max_depth:
        direction = -1 if rng.uniform() < 0.5 else 1
        if direction == -1:
            minus, _, prop1, n1, s1, alpha, n_alpha, div = _build_tree(
                target, minus, log_u, direction, depth, eps, joint0, m_inv, rng
            )
        else:
            _, plus, prop1, n1, s1, alpha, n_alpha, div = _build_tree(
                target, plus, log_u, direction, depth, eps, joint0, m_inv, rng
            )
        alpha_sum += alpha
        n_alpha_sum += n_alpha
        if s1 == 1 and rng.uniform() < n1 / max(n, 1):
            prop = prop1
        n += n1
        divergent = divergent or div
        s = s1 * _no_uturn(minus, plus, m_inv)
        depth += 1
    accept_frac = alpha_sum / max(n_alpha_sum, 1)
    return prop, accept_frac, divergent


def nuts_chain(
    target,
    z0,
    num_warmup,
    num_draws,
    rng,
    max_depth=8,
    target_accept=0.8,
    adapt_mass=True,
):
    """Run one adaptive NUTS chain.

    Parameters
    ----------
    target : callable
        z -> (log density, gradient).
    z0 : ndarray
        Initial position.
    num_warmup, num_draws : int
        Adaptation transitions (discarded) and retained transitions.
    rng : numpy.random.Generator
    max_depth : int
        Maximum number of trajectory doublings per transition.
    target_accept : float
        Dual-averaging acceptance target.
    adapt_mass : bool
        Estimate a diagonal metric during warmup.

    Returns
    -------
    draws : ndarray, shape (num_draws, dim)
    info : NutsInfo
    """
    z0 = np.asarray(z0, dtype=float)
    dim = z0.shape[0]
    logp, grad = target(z0)
    if not np.isfinite(logp):
        raise ValueError("initial point has non-finite log density")
    state = (z0, np.zeros(dim), logp, grad)
    m_inv = np.ones(dim)

    eps0 = _find_reasonable_eps(target, z0, logp, grad, m_inv, rng)
    da = _DualAveraging(eps0, delta=target_accept)

    # warmup phases: step size only, then metric accumulation, then step
    # size again under the new metric
    do_mass = adapt_mass and num_warmup >= 40
    p1_end = int(0.15 * num_warmup) if do_mass else num_warmup
    p2_end = int(0.9 * num_warmup) if do_mass else num_warmup
    welford_n = 0
    welford_mean = np.zeros(dim)
    welford_m2 = np.zeros(dim)

    for t in range(num_warmup):
        state, accept_frac, _ = _transition(
            target, state, da.eps, m_inv, max_depth, rng
        )
        da.update(accept_frac)
        if do_mass and p1_end <= t < p2_end:
            welford_n += 1
            delta = state[0] - welford_mean
            welford_mean += delta / welford_n
            welford_m2 += delta * (state[0] - welford_mean)
        if do_mass and t == p2_end - 1 and welford_n >= 10:
            var = welford_m2 / max(welford_n - 1, 1)
            # shrink toward the unit metric as Stan does
            w = welford_n / (welford_n + 5.0)
            m_inv = w * var + (1.0 - w) * 1e-3 + 1e-10
            eps0 = _find_reasonable_eps(
                target, state[0], state[2], state[3], m_inv, rng
            )
            da = _DualAveraging(eps0, delta=target_accept)

    eps = da.eps_final if num_warmup > 0 else da.eps
    draws = np.empty((num_draws, dim))
    divergences = 0
    accept_total = 0.0
    for t in range(num_draws):
        state, accept_frac, divergent = _transition(
            target, state, eps, m_inv, max_depth, rng
        )
        draws[t] = state[0]
        divergences += int(divergent)
        accept_total += accept_frac
    rate = divergences / max(num_draws, 1)
    if rate > 0.25:
        warnings.warn(
            f"NUTS divergence rate {rate:.1%} exceeds 25%; "
            "posterior draws may be unreliable",
            RuntimeWarning,
        )
    info = NutsInfo(
        step_size=float(eps),
        accept_mean=accept_total / max(num_draws, 1),
        divergences=divergences,
        divergence_rate=rate,
        num_draws=num_draws,
    )
    return draws, info
