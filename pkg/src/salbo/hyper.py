"""Posterior over GP hyperparameters: NUTS sampling and MAP estimation.

The target density is the log marginal likelihood plus the log prior in
the unconstrained space of the chosen family (positives in log space,
Jacobians included).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gp import log_marginal_likelihood
from .nuts import NutsInfo, nuts_chain
from .utils import rng_from

# hyperparameters beyond exp(+-30) on the log scale are numerically
# meaningless for standardized data; treat them as zero-density
Z_BOUND = 30.0


@dataclass(frozen=True)
class MCMCConfig:
    """Sampler settings: M retained sets, warmup and thinning."""

    num_samples: int = 16
    warmup: int = 256
    thinning: int = 16
    max_depth: int = 8
    target_accept: float = 0.8
    adapt_mass: bool = True

    def __post_init__(self):
        if self.num_samples < 1 or self.warmup < 0 or self.thinning < 1:
            raise ValueError("invalid MCMC configuration")


@dataclass
class HyperSampleSet:
    """Hyperparameter sets drawn from the posterior, with provenance."""

    thetas: list
    z: np.ndarray
    prior_name: str
    config: MCMCConfig | None = None
    seed: int | None = None
    info: NutsInfo | None = None

    def __len__(self):
        return len(self.thetas)


def log_posterior_density(z, dataset, prior, kind="matern52", with_grad=True):
    """Unnormalized log posterior over the unconstrained vector z.

    Returns (value, grad) when `with_grad`, else the value alone.
    Non-finite or out-of-range vectors get density -inf.
    """
    z = np.asarray(z, dtype=float)
    zdim = prior.unconstrained_dim(prior.input_dim(z.shape[0]))
    if z.shape[0] != zdim:
        raise ValueError("vector length does not match the prior family")
    bad = not np.all(np.isfinite(z)) or np.max(np.abs(z)) > Z_BOUND
    if bad:
        out = (-np.inf, np.zeros_like(z))
        return out if with_grad else out[0]
    prior_val, prior_grad = prior.log_density(z)
    theta = prior.to_hyperparams(z)
    try:
        if with_grad:
            lml, lml_grad = log_marginal_likelihood(
                dataset, theta, kind, with_grad=True
            )
        else:
            lml = log_marginal_likelihood(dataset, theta, kind)
    except np.linalg.LinAlgError:
        out = (-np.inf, np.zeros_like(z))
        return out if with_grad else out[0]
    if with_grad:
        grad = prior_grad + prior.lml_grad_to_z(lml_grad)
        return prior_val + lml, grad
    return prior_val + lml


def _init_vector(prior, dim, rng):
    mean_log, _ = prior.log_moments(dim)
    return mean_log + 0.1 * rng.standard_normal(mean_log.shape[0])


def nuts_sample(dataset, prior, config=None, seed=0, kind="matern52"):
    """Draw hyperparameter sets from the posterior with NUTS.

    Runs a single adaptive chain for `warmup` transitions, then retains
    every `thinning`-th of the next `num_samples * thinning` draws.

    Returns
    -------
    HyperSampleSet with `num_samples` hyperparameter sets.
    """
    config = config or MCMCConfig()
    rng = rng_from(seed)
    dim = dataset.dim

    def target(z):
        return log_posterior_density(z, dataset, prior, kind)

    z0 = _init_vector(prior, dim, rng)
    num_raw = config.num_samples * config.thinning
    draws, info = nuts_chain(
        target,
        z0,
        num_warmup=config.warmup,
        num_draws=num_raw,
        rng=rng,
        max_depth=config.max_depth,
        target_accept=config.target_accept,
        adapt_mass=config.adapt_mass,
    )
    thinned = draws[config.thinning - 1 :: config.thinning]
    thetas = [prior.to_hyperparams(z) for z in thinned]
    return HyperSampleSet(
        thetas=thetas,
        z=thinned,
        prior_name=prior.name,
        config=config,
        seed=seed if isinstance(seed, (int, np.integer)) else None,
        info=info,
    )


def map_estimate(dataset, prior, restarts=10, seed=0, kind="matern52", max_iter=200):
    """Posterior mode by gradient ascent with backtracking line search.

    The first start sits at the prior's log-space mean, the remaining
    `restarts - 1` are prior draws.

    Returns
    -------
    HyperParams at the best mode found.
    """
    rng = rng_from(seed)
    dim = dataset.dim
    best_val, best_z = -np.inf, None
    for r in range(max(restarts, 1)):
        if r == 0:
            z = prior.log_moments(dim)[0].copy()
        else:
            z = np.clip(prior.sample(dim, rng), -Z_BOUND + 1, Z_BOUND - 1)
        val, grad = log_posterior_density(z, dataset, prior, kind)
        if not np.isfinite(val):
            continue
        step = 0.1
        for _ in range(max_iter):
            gnorm2 = grad @ grad
            if gnorm2 < 1e-12:
                break
            step = min(step * 2.0, 1.0)
            improved = False
            while step > 1e-12:
                z_new = z + step * grad
                val_new = log_posterior_density(
                    z_new, dataset, prior, kind, with_grad=False
                )
                if val_new >= val + 1e-4 * step * gnorm2:
                    improved = True
                    break
                step *= 0.5
            if not improved:
                break
            z = z_new
            val, grad = log_posterior_density(z, dataset, prior, kind)
        if val > best_val:
            best_val, best_z = val, z
    if best_z is None:
        raise RuntimeError("MAP estimation failed from every start")
    return prior.to_hyperparams(best_z)
