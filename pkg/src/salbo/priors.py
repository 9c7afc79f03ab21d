"""Hyperparameter prior families over an unconstrained sampling space.

Every family defines a density on a real vector z that packs the model
hyperparameters with positive quantities in log space, so one sampler
handles all families.  Log-space densities include the Jacobian of the
exp transform.  The hierarchical sparsity family samples the scales
tau^2 and kappa_i^2 directly (half-Cauchy through log space) and
derives the lengthscales as l_i = 1 / (kappa_i tau).
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln, polygamma, psi

from .gp import HyperParams
from .utils import as_vector

LOG_2PI = np.log(2.0 * np.pi)


class _NormalComp:
    """z ~ N(m, v); used both for linear parameters and log-normal priors."""

    def __init__(self, mean, var):
        self.mean_log = float(mean)
        self.var_log = float(var)

    def logpdf_grad(self, z):
        d = z - self.mean_log
        val = -0.5 * d * d / self.var_log - 0.5 * np.log(2.0 * np.pi * self.var_log)
        return val, -d / self.var_log

    def sample(self, rng):
        return rng.normal(self.mean_log, np.sqrt(self.var_log))


class _LogGammaComp:
    """z = log X with X ~ Gamma(shape a, rate b); Jacobian included."""

    def __init__(self, a, b):
        self.a = float(a)
        self.b = float(b)
        self.mean_log = psi(self.a) - np.log(self.b)
        self.var_log = float(polygamma(1, self.a))

    def logpdf_grad(self, z):
        val = self.a * np.log(self.b) - gammaln(self.a) + self.a * z - self.b * np.exp(z)
        return val, self.a - self.b * np.exp(z)

    def sample(self, rng):
        return np.log(rng.gamma(self.a, 1.0 / self.b))


class _LogHalfCauchyComp:
    """z = log X with X ~ half-Cauchy(scale s); Jacobian included."""

    def __init__(self, s):
        self.s = float(s)
        self.mean_log = np.log(self.s)
        self.var_log = np.pi**2 / 4.0

    def logpdf_grad(self, z):
        e2 = np.exp(2.0 * z)
        val = np.log(2.0 * self.s / np.pi) + z - np.log(self.s**2 + e2)
        return val, 1.0 - 2.0 * e2 / (self.s**2 + e2)

    def sample(self, rng):
        return np.log(self.s * np.abs(rng.standard_cauchy()))


class PriorFamily:
    """Independent-component prior over the unconstrained vector.

    Subclasses define the component list per input dimension and how the
    vector maps to `HyperParams`.
    """

    name = "base"

    def components(self, dim):
        raise NotImplementedError

    def unconstrained_dim(self, dim):
        return len(self.components(dim))

    def input_dim(self, z_len):
        """Input dimension implied by an unconstrained vector length."""
        return z_len - 3

    def log_density(self, z):
        """Log prior density of z and its gradient."""
        z = as_vector(z, "z")
        dim = self.input_dim(z.shape[0])
        if dim < 1:
            raise ValueError(
                f"vector of length {z.shape[0]} implies input dimension "
                f"{dim}; need at least 1"
            )
        comps = self.components(dim)
        if len(comps) != z.shape[0]:
            raise ValueError("vector length does not match this family")
        val = 0.0
        grad = np.zeros_like(z)
        for i, comp in enumerate(comps):
            v, g = comp.logpdf_grad(z[i])
            val += v
            grad[i] = g
        return float(val), grad

    def sample(self, dim, rng):
        """Draw one unconstrained vector from the prior."""
        return np.array([c.sample(rng) for c in self.components(dim)])

    def log_moments(self, dim):
        """Analytic mean and variance of each unconstrained coordinate."""
        comps = self.components(dim)
        return (
            np.array([c.mean_log for c in comps]),
            np.array([c.var_log for c in comps]),
        )

    def to_hyperparams(self, z):
        """Unpack an unconstrained vector into `HyperParams`."""
        z = as_vector(z, "z")
        return HyperParams.from_log_vector(z)

    def from_hyperparams(self, theta):
        """Inverse of `to_hyperparams` where the map is invertible."""
        return theta.to_log_vector()

    def lml_grad_to_z(self, lml_grad):
        """Map a gradient in [log l, log s2_f, log s2_e, c] to z space."""
        return lml_grad


class LogNormalPrior(PriorFamily):
    """LN(mean, var) on lengthscales, outputscale and noise variance."""

    def __init__(self, var=3.0, name=None):
        self.var = float(var)
        self.name = name or f"lognormal(0,{var:g})"

    def components(self, dim):
        return [_NormalComp(0.0, self.var)] * (dim + 2) + [_NormalComp(0.0, 1.0)]


class GammaDefaultPrior(PriorFamily):
    """Gamma(3,6) lengthscales, Gamma(2,0.15) outputscale, Gamma(1.1,0.05) noise."""

    name = "gamma_default"

    def components(self, dim):
        return (
            [_LogGammaComp(3.0, 6.0)] * dim
            + [_LogGammaComp(2.0, 0.15), _LogGammaComp(1.1, 0.05), _NormalComp(0.0, 1.0)]
        )


class SparseAxisPrior(PriorFamily):
    """Hierarchical sparsity prior: tau^2 ~ HC(0.1), kappa_i^2 ~ HC(1).

    The unconstrained vector is
    [log tau^2, log kappa_1^2 .. log kappa_d^2, log s2_f, log s2_e, c]
    and the lengthscales follow as l_i = 1 / (kappa_i tau).
    """

    name = "saas"

    def __init__(self, global_scale=0.1):
        self.global_scale = float(global_scale)

    def components(self, dim):
        return (
            [_LogHalfCauchyComp(self.global_scale)]
            + [_LogHalfCauchyComp(1.0)] * dim
            + [_LogGammaComp(2.0, 0.15), _LogGammaComp(0.9, 10.0), _NormalComp(0.0, 1.0)]
        )

    def input_dim(self, z_len):
        return z_len - 4

    def to_hyperparams(self, z):
        z = as_vector(z, "z")
        d = self.input_dim(z.shape[0])
        if d < 1:
            raise ValueError("vector too short for this family")
        log_ls = -0.5 * (z[1 : d + 1] + z[0])
        return HyperParams(
            lengthscales=np.exp(log_ls),
            outputscale_var=float(np.exp(z[d + 1])),
            noise_var=float(np.exp(z[d + 2])),
            mean_const=float(z[d + 3]),
        )

    def from_hyperparams(self, theta):
        # the map (tau, kappa) -> l is many-to-one; pick tau = 1
        d = theta.dim
        z = np.zeros(d + 4)
        z[1 : d + 1] = -2.0 * np.log(theta.lengthscales)
        z[d + 1] = np.log(theta.outputscale_var)
        z[d + 2] = np.log(theta.noise_var)
        z[d + 3] = theta.mean_const
        return z

    def lml_grad_to_z(self, lml_grad):
        d = lml_grad.shape[0] - 3
        g = np.zeros(d + 4)
        # log l_i = -(z_kappa_i + z_tau) / 2
        g[0] = -0.5 * np.sum(lml_grad[:d])
        g[1 : d + 1] = -0.5 * lml_grad[:d]
        g[d + 1 :] = lml_grad[d:]
        return g

    def log_lengthscale_moments(self, dim):
        """Analytic mean and variance of log l_i under the prior."""
        mean = -0.5 * (0.0 + np.log(self.global_scale))
        var = 0.25 * (np.pi**2 / 4.0 + np.pi**2 / 4.0)
        return np.full(dim, mean), np.full(dim, var)


_REGISTRY = {
    "lognormal_wide": lambda: LogNormalPrior(3.0, "lognormal_wide"),
    "lognormal_narrow": lambda: LogNormalPrior(1.0, "lognormal_narrow"),
    "gamma_default": GammaDefaultPrior,
    "saas": SparseAxisPrior,
}


def make_prior(name):
    """Look up a prior family by registry name."""
    key = name.lower().replace("-", "_")
    if key not in _REGISTRY:
        raise KeyError(
            f"unknown prior family {name!r}; available: {sorted(_REGISTRY)}"
        )
    return _REGISTRY[key]()
