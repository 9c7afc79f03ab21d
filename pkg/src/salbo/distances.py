"""Statistical distances between Gaussians and equal-weight mixtures.

Closed forms cover Gaussian-Gaussian pairs; mixtures are either
moment-matched to a Gaussian first or handled by Monte Carlo
estimators.  All functions are elementwise over trailing batch axes:
a `MixturePredict` stacks components along axis 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm, qmc

from .gp import GaussianPredict
from .utils import gaussian_logpdf, rng_from

METRICS = ("hellinger", "wasserstein2", "kl")
ESTIMATORS = ("moment_match", "monte_carlo")


@dataclass
class MixturePredict:
    """Equal-weight Gaussian mixture over a batch of points.

    means, vars : ndarray, shape (M,) or (M, b)
        One row per mixture component.
    """

    means: np.ndarray
    vars: np.ndarray

    def __post_init__(self):
        self.means = np.atleast_1d(np.asarray(self.means, dtype=float))
        self.vars = np.atleast_1d(np.asarray(self.vars, dtype=float))
        if self.means.shape != self.vars.shape:
            raise ValueError("means and vars must share a shape")
        if np.any(self.vars < 0):
            raise ValueError("vars must be nonnegative")

    @property
    def num_components(self):
        return self.means.shape[0]

    def _component_params(self, x_ndim):
        """Means and vars shaped to broadcast against (1,) + x.shape."""
        if self.means.ndim == 1:
            shape = (-1,) + (1,) * x_ndim
            return self.means.reshape(shape), self.vars.reshape(shape)
        return self.means, self.vars

    def logpdf(self, x):
        """Log mixture density at x.

        For a single-point mixture (components shaped (M,)) x may have
        any shape; for a batch mixture (M, b) x must be shaped (b,).
        """
        x = np.asarray(x, dtype=float)
        m, v = self._component_params(x.ndim)
        comp = gaussian_logpdf(x[None, ...], m, v)
        return logsumexp(comp, axis=0) - np.log(self.num_components)

    def cdf(self, x):
        """Mixture CDF at x, same shape conventions as `logpdf`."""
        x = np.asarray(x, dtype=float)
        m, v = self._component_params(x.ndim)
        sd = np.sqrt(np.maximum(v, 1e-300))
        return np.mean(norm.cdf((x[None, ...] - m) / sd), axis=0)


def moment_match(mix):
    """Gaussian with the mean and variance of the mixture.

    The variance follows the law of total variance: average component
    variance plus the variance of the component means.
    """
    mean = mix.means.mean(axis=0)
    var = mix.vars.mean(axis=0) + mix.means.var(axis=0)
    return GaussianPredict(mean, var)


def gaussian_hellinger(mean1, var1, mean2, var2):
    """Hellinger distance H (not squared) between two Gaussians.

    Degenerate cases: two point masses coincide -> 0; a point mass
    against anything else -> 1.
    """
    mean1, var1, mean2, var2 = np.broadcast_arrays(mean1, var1, mean2, var2)
    vsum = var1 + var2
    both_zero = vsum == 0
    one_zero = (var1 == 0) | (var2 == 0)
    vsum_safe = np.where(vsum == 0, 1.0, vsum)
    sd_prod = np.sqrt(np.maximum(var1 * var2, 0.0))
    h2 = 1.0 - np.sqrt(2.0 * sd_prod / vsum_safe) * np.exp(
        -0.25 * (mean1 - mean2) ** 2 / vsum_safe
    )
    h2 = np.where(one_zero, 1.0, h2)
    h2 = np.where(both_zero & (mean1 == mean2), 0.0, h2)
    return np.sqrt(np.clip(h2, 0.0, 1.0))


def gaussian_wasserstein2(mean1, var1, mean2, var2):
    """2-Wasserstein distance between two Gaussians."""
    sd1 = np.sqrt(np.maximum(np.asarray(var1, dtype=float), 0.0))
    sd2 = np.sqrt(np.maximum(np.asarray(var2, dtype=float), 0.0))
    return np.sqrt((np.asarray(mean1) - np.asarray(mean2)) ** 2 + (sd1 - sd2) ** 2)


def gaussian_kl(mean1, var1, mean2, var2):
    """KL(N1 || N2); +inf when the reference variance is zero."""
    mean1, var1, mean2, var2 = np.broadcast_arrays(
        np.asarray(mean1, dtype=float),
        np.asarray(var1, dtype=float),
        np.asarray(mean2, dtype=float),
        np.asarray(var2, dtype=float),
    )
    ref_zero = var2 == 0
    v2 = np.where(ref_zero, 1.0, var2)
    kl = 0.5 * (np.log(v2 / np.where(var1 == 0, v2, var1)) - 1.0) \
        + (var1 + (mean1 - mean2) ** 2) / (2.0 * v2)
    # var1 == 0 collapses the entropy term; the cross term stays
    kl = np.where(var1 == 0, np.inf, kl)
    kl = np.where(ref_zero, np.inf, kl)
    kl = np.where((var1 == var2) & (mean1 == mean2), 0.0, kl)
    return kl


def mixture_quantile(mix, u, tol=1e-10, max_iter=300):
    """Quantiles of an equal-weight Gaussian mixture by bisection.

    `u` is an array of probabilities; the bracket spans all components
    by ten standard deviations.  Raises on non-convergence.
    """
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u >= 1)):
        raise ValueError("quantile levels must lie strictly inside (0, 1)")
    if mix.means.ndim != 1:
        raise ValueError("mixture_quantile expects a single-point mixture")
    sd = np.sqrt(np.maximum(mix.vars, 1e-300))
    lo = np.full(u.shape, np.min(mix.means - 10.0 * np.max(sd)))
    hi = np.full(u.shape, np.max(mix.means + 10.0 * np.max(sd)))
    mid = 0.5 * (lo + hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f = mix.cdf(mid)
        err = f - u
        if np.all(np.abs(err) < tol):
            return mid
        hi = np.where(err > 0, mid, hi)
        lo = np.where(err <= 0, mid, lo)
        if np.all(hi - lo < 1e-15 * np.maximum(np.abs(hi), 1.0)):
            break
    err = np.abs(mix.cdf(mid) - u)
    if np.max(err) > 1e-8:
        raise RuntimeError(
            f"mixture quantile bisection did not converge (error {np.max(err):.2e})"
        )
    return mid


def _broadcast_pair(p_mix, q):
    """Broadcast a mixture and a Gaussian to a shared batch shape.

    Returns component means and vars shaped (M, b), Gaussian mean and
    var shaped (b,), and the original batch shape, which is () when both
    inputs describe a single point.
    """
    q_mean = np.asarray(q.mean, dtype=float)
    q_var = np.asarray(q.var, dtype=float)
    batch = np.broadcast_shapes(p_mix.means.shape[1:], q_mean.shape, q_var.shape)
    M = p_mix.num_components
    b = int(np.prod(batch, dtype=int))
    comp = (M,) + batch
    if p_mix.means.ndim == 1:
        lift = (M,) + (1,) * len(batch)
        means = np.broadcast_to(p_mix.means.reshape(lift), comp)
        vars_ = np.broadcast_to(p_mix.vars.reshape(lift), comp)
    else:
        means = np.broadcast_to(p_mix.means, comp)
        vars_ = np.broadcast_to(p_mix.vars, comp)
    qm = np.broadcast_to(q_mean, batch)
    qv = np.broadcast_to(q_var, batch)
    return (
        means.reshape(M, b),
        vars_.reshape(M, b),
        qm.reshape(b),
        qv.reshape(b),
        batch,
    )


def _sample_mixture(mix, num, rng):
    """Stratified draws from the mixture, about `num` per batch column.

    Every component receives an equal share of the draws (`num` is
    rounded up to a multiple of the component count), and each share
    uses jittered stratified normal quantiles.  The draws are unbiased
    samples from the mixture with far lower estimator variance than
    independent sampling.
    """
    means = mix.means if mix.means.ndim == 2 else mix.means[:, None]
    vars_ = mix.vars if mix.vars.ndim == 2 else mix.vars[:, None]
    M, b = means.shape
    per = -(-num // M)
    comp = np.repeat(np.arange(M), per)
    pos = np.tile(np.arange(per), M)
    u = (pos + rng.uniform(size=comp.size)) / per
    z = norm.ppf(u)
    mu = means[comp]
    sd = np.sqrt(np.maximum(vars_[comp], 0.0))
    x = mu + sd * z[:, None]
    return x if mix.means.ndim == 2 else x[:, 0]


def _pairwise_logpdf(mix, x):
    """Component-resolved mixture log density at draws x of shape (L, b?)."""
    means = mix.means if mix.means.ndim == 2 else mix.means[:, None]
    vars_ = mix.vars if mix.vars.ndim == 2 else mix.vars[:, None]
    xx = x if x.ndim == 2 else x[:, None]
    comp = gaussian_logpdf(xx[None, :, :], means[:, None, :], vars_[:, None, :])
    out = logsumexp(comp, axis=0) - np.log(means.shape[0])
    return out if x.ndim == 2 else out[:, 0]


def mc_hellinger(p_mix, q, num_draws, seed=0):
    """Monte Carlo Hellinger distance between a mixture and a Gaussian.

    Estimates H^2 = 1 - E_p[sqrt(q(x)/p(x))] with stratified draws from
    the mixture (see `_sample_mixture`).  Draws where the mixture
    density underflows are skipped and the average reweighted over the
    rest.  Returns a float when both inputs describe a single point,
    else an array of the batch shape.
    """
    rng = rng_from(seed)
    means, vars_, qm, qv, batch = _broadcast_pair(p_mix, q)
    mix = MixturePredict(means, vars_)
    x = _sample_mixture(mix, num_draws, rng)
    log_p = _pairwise_logpdf(mix, x)
    log_q = gaussian_logpdf(x, qm[None, :], qv[None, :])
    valid = np.isfinite(log_p)
    ratio = np.exp(np.where(valid, 0.5 * (log_q - np.where(valid, log_p, 0.0)), 0.0))
    ratio = np.where(valid, ratio, 0.0)
    count = np.maximum(valid.sum(axis=0), 1)
    h2 = 1.0 - ratio.sum(axis=0) / count
    out = np.sqrt(np.clip(h2, 0.0, 1.0)).reshape(batch)
    return float(out) if batch == () else out


def _low_discrepancy_levels(num_draws, seed=None):
    """Quantile levels from a scrambled sequence, kept off the endpoints."""
    if num_draws & (num_draws - 1) == 0:
        sampler = qmc.Sobol(d=1, scramble=seed is not None, seed=seed)
    else:
        sampler = qmc.Halton(d=1, scramble=seed is not None, seed=seed)
    u = sampler.random(num_draws)[:, 0]
    return 0.5 / num_draws + u * (1.0 - 1.0 / num_draws)


def mc_wasserstein2(p_mix, q, num_draws, seed=None):
    """Quasi-Monte Carlo 2-Wasserstein distance: mixture against Gaussian.

    Averages |Q_p(u) - Q_q(u)|^2 over low-discrepancy levels u, where Q
    are the quantile functions; mixture quantiles come from bisection.
    Returns a float when both inputs describe a single point, else an
    array of the batch shape.
    """
    u = _low_discrepancy_levels(num_draws, seed)
    means, vars_, qm, qv, batch = _broadcast_pair(p_mix, q)
    b = means.shape[1]
    out = np.empty(b)
    for j in range(b):
        sub = MixturePredict(means[:, j], vars_[:, j])
        qp = mixture_quantile(sub, u)
        qq = norm.ppf(u, loc=qm[j], scale=np.sqrt(np.maximum(qv[j], 1e-300)))
        out[j] = np.sqrt(np.mean((qp - qq) ** 2))
    out = out.reshape(batch)
    return float(out) if batch == () else out


@dataclass(frozen=True)
class DistanceSpec:
    """Choice of statistical distance and mixture estimator.

    metric : {"hellinger", "wasserstein2", "kl"}
    estimator : {"moment_match", "monte_carlo"}
    num_draws : int
        Monte Carlo sample count (ignored for moment matching).
    """

    metric: str = "hellinger"
    estimator: str = "moment_match"
    num_draws: int = 4096

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.metric == "kl" and self.estimator == "monte_carlo":
            raise ValueError("KL divergence is only available with moment matching")
        if self.num_draws < 1:
            raise ValueError("num_draws must be positive")


def distance(p_mix, q, spec, seed=0):
    """Distance between a mixture and a Gaussian under a `DistanceSpec`.

    With moment matching the mixture is collapsed to a Gaussian first.
    KL is oriented as KL(q || moment_match(p_mix)), which makes the
    ensemble average of this distance coincide with the mutual
    information acquisition (see `acquisition.bald_value`).
    """
    if spec.estimator == "moment_match":
        mm = moment_match(p_mix)
        if spec.metric == "hellinger":
            return gaussian_hellinger(q.mean, q.var, mm.mean, mm.var)
        if spec.metric == "wasserstein2":
            return gaussian_wasserstein2(q.mean, q.var, mm.mean, mm.var)
        return gaussian_kl(q.mean, q.var, mm.mean, mm.var)
    if spec.metric == "hellinger":
        return mc_hellinger(p_mix, q, spec.num_draws, seed)
    return mc_wasserstein2(p_mix, q, spec.num_draws, seed)
