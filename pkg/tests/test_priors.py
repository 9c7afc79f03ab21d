"""Tests for the prior families on the unconstrained sampling space."""

import numpy as np
import pytest
from scipy.integrate import quad

from salbo import Dataset, log_marginal_likelihood, make_prior
from salbo.priors import (
    GammaDefaultPrior,
    LogNormalPrior,
    SparseAxisPrior,
    _LogGammaComp,
    _LogHalfCauchyComp,
    _NormalComp,
)

FAMILIES = ["lognormal_wide", "lognormal_narrow", "gamma_default", "saas"]


def test_registry_names_and_normalization():
    assert isinstance(make_prior("lognormal_wide"), LogNormalPrior)
    assert isinstance(make_prior("LogNormal-Wide"), LogNormalPrior)
    assert isinstance(make_prior("gamma_default"), GammaDefaultPrior)
    assert isinstance(make_prior("saas"), SparseAxisPrior)
    with pytest.raises(KeyError):
        make_prior("jeffreys")


def test_component_densities_integrate_to_one():
    for comp in (
        _NormalComp(0.0, 3.0),
        _LogGammaComp(3.0, 6.0),
        _LogGammaComp(1.1, 0.05),
        _LogHalfCauchyComp(0.1),
        _LogHalfCauchyComp(1.0),
    ):
        total, _ = quad(lambda z: np.exp(comp.logpdf_grad(z)[0]), -60, 60, limit=200)
        assert abs(total - 1.0) < 1e-7


def test_log_density_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    h = 1e-6
    for name in FAMILIES:
        prior = make_prior(name)
        for dim in (1, 3):
            z0 = prior.sample(dim, rng)
            _, grad = prior.log_density(z0)
            for j in range(z0.shape[0]):
                zp, zm = z0.copy(), z0.copy()
                zp[j] += h
                zm[j] -= h
                fd = (prior.log_density(zp)[0] - prior.log_density(zm)[0]) / (2 * h)
                assert abs(grad[j] - fd) < 1e-5 * max(abs(fd), 1.0)


def test_sample_moments_match_analytic_log_moments():
    # every component has light tails after the log transform, so plain
    # sample moments converge to the analytic log moments
    rng = np.random.default_rng(5)
    n = 50_000
    for name in FAMILIES:
        prior = make_prior(name)
        dim = 2
        draws = np.array([prior.sample(dim, rng) for _ in range(n)])
        mean_ref, var_ref = prior.log_moments(dim)
        assert np.abs(draws.mean(axis=0) - mean_ref).max() < 0.05
        rel_var = np.abs(draws.var(axis=0) - var_ref) / var_ref
        assert rel_var.max() < 0.1


def test_log_density_rejects_wrong_length():
    prior = make_prior("lognormal_wide")
    with pytest.raises(ValueError):
        # dim would be -1
        prior.log_density(np.zeros(2))


def test_unconstrained_dim_per_family():
    assert make_prior("lognormal_wide").unconstrained_dim(4) == 7
    assert make_prior("gamma_default").unconstrained_dim(4) == 7
    assert make_prior("saas").unconstrained_dim(4) == 8
    assert make_prior("lognormal_wide").input_dim(7) == 4
    assert make_prior("saas").input_dim(8) == 4


def test_hyperparams_roundtrip_lognormal_and_gamma():
    rng = np.random.default_rng(7)
    for name in ("lognormal_wide", "gamma_default"):
        prior = make_prior(name)
        z = prior.sample(3, rng)
        theta = prior.to_hyperparams(z)
        back = prior.from_hyperparams(theta)
        assert np.allclose(back, z, atol=1e-12)


def test_sparse_axis_lengthscale_mapping():
    prior = make_prior("saas")
    tau2, kappa2 = 0.04, 4.0
    z = np.array([np.log(tau2), np.log(kappa2), np.log(1.5), np.log(0.01), 0.3])
    theta = prior.to_hyperparams(z)
    expected_ls = 1.0 / (np.sqrt(kappa2) * np.sqrt(tau2))
    assert abs(theta.lengthscales[0] - expected_ls) < 1e-12
    assert abs(theta.outputscale_var - 1.5) < 1e-12
    assert abs(theta.noise_var - 0.01) < 1e-12
    assert abs(theta.mean_const - 0.3) < 1e-12


def test_sparse_axis_hyperparams_roundtrip():
    rng = np.random.default_rng(11)
    prior = make_prior("saas")
    z = prior.sample(3, rng)
    theta = prior.to_hyperparams(z)
    theta2 = prior.to_hyperparams(prior.from_hyperparams(theta))
    assert np.allclose(theta2.lengthscales, theta.lengthscales)
    assert np.isclose(theta2.outputscale_var, theta.outputscale_var)
    assert np.isclose(theta2.noise_var, theta.noise_var)


def test_sparse_axis_log_lengthscale_moments():
    prior = make_prior("saas")
    rng = np.random.default_rng(13)
    mean_ref, var_ref = prior.log_lengthscale_moments(1)
    draws = np.array(
        [np.log(prior.to_hyperparams(prior.sample(1, rng)).lengthscales[0])
         for _ in range(50_000)]
    )
    # log l is a symmetric sum of two log-half-Cauchy halves, so the
    # median coincides with the analytic mean
    assert abs(np.median(draws) - mean_ref[0]) < 0.04
    assert abs(draws.var() - var_ref[0]) / var_ref[0] < 0.1


def test_lml_grad_to_z_chain_rule():
    # the composite map z -> theta -> marginal likelihood must have the
    # gradient produced by pushing the packed-space gradient through
    # each family's reparameterization
    rng = np.random.default_rng(17)
    X = rng.uniform(size=(9, 2))
    y = rng.standard_normal(9)
    ds = Dataset(X, y)
    h = 1e-6
    for name in FAMILIES:
        prior = make_prior(name)
        z0 = prior.sample(2, rng)

        def f(z):
            return log_marginal_likelihood(ds, prior.to_hyperparams(z), "matern52")

        _, lml_grad = log_marginal_likelihood(
            ds, prior.to_hyperparams(z0), "matern52", with_grad=True
        )
        grad = prior.lml_grad_to_z(lml_grad)
        for j in range(z0.shape[0]):
            zp, zm = z0.copy(), z0.copy()
            zp[j] += h
            zm[j] -= h
            fd = (f(zp) - f(zm)) / (2 * h)
            assert abs(grad[j] - fd) < 1e-4 * abs(fd) + 1e-6, (name, j)
