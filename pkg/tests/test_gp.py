"""Tests for the GP core: kernels, likelihood, fantasy updates, moments."""

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from salbo import (
    Dataset,
    GaussianPredict,
    HyperParams,
    empty_dataset,
    fantasize,
    fit,
    kernel_matrix,
    log_marginal_likelihood,
    truncated_moments,
)


def _random_problem(rng, n, d, noise_var=0.05):
    X = rng.uniform(size=(n, d))
    y = rng.standard_normal(n)
    theta = HyperParams(
        lengthscales=rng.uniform(0.3, 2.0, d),
        outputscale_var=rng.uniform(0.5, 2.0),
        noise_var=noise_var,
        mean_const=rng.uniform(-0.5, 0.5),
    )
    return Dataset(X, y), theta


def test_matern_kernel_value_at_known_distance():
    # ARD distance r = 0.5 / 0.25 = 2 in one dimension; the Matern-5/2
    # formula gives var * (1 + sqrt(5) r + 5 r^2 / 3) exp(-sqrt(5) r).
    theta = HyperParams(np.array([0.25]), 1.3, 0.0, 0.0)
    K = kernel_matrix(np.array([[0.0]]), np.array([[0.5]]), theta, "matern52")
    r = 2.0
    expected = 1.3 * (1 + np.sqrt(5) * r + 5 * r**2 / 3) * np.exp(-np.sqrt(5) * r)
    assert K.shape == (1, 1)
    assert abs(K[0, 0] - expected) < 1e-14


def test_rbf_kernel_value_at_known_distance():
    theta = HyperParams(np.array([0.5, 1.0]), 2.0, 0.0, 0.0)
    x = np.array([[0.0, 0.0]])
    z = np.array([[0.5, 1.0]])
    # squared ARD distance = (0.5/0.5)^2 + (1/1)^2 = 2
    expected = 2.0 * np.exp(-0.5 * 2.0)
    K = kernel_matrix(x, z, theta, "rbf")
    assert abs(K[0, 0] - expected) < 1e-14


def test_kernel_diagonal_is_outputscale():
    rng = np.random.default_rng(3)
    X = rng.uniform(size=(7, 3))
    theta = HyperParams(np.array([0.7, 0.4, 1.1]), 1.9, 0.0, 0.0)
    for kind in ("matern52", "rbf"):
        K = kernel_matrix(X, X, theta, kind)
        assert np.allclose(np.diag(K), 1.9)
        assert np.allclose(K, K.T)
        eigvals = np.linalg.eigvalsh(K)
        assert eigvals.min() > -1e-9


def test_unknown_kernel_raises():
    theta = HyperParams(np.array([1.0]), 1.0, 0.1, 0.0)
    with pytest.raises(ValueError):
        kernel_matrix(np.zeros((1, 1)), np.zeros((1, 1)), theta, "cubic")


def test_hyperparams_validation():
    with pytest.raises(ValueError):
        HyperParams(np.array([-1.0]), 1.0, 0.1, 0.0)
    with pytest.raises(ValueError):
        HyperParams(np.array([1.0]), 0.0, 0.1, 0.0)
    with pytest.raises(ValueError):
        HyperParams(np.array([1.0]), 1.0, -0.1, 0.0)


def test_hyperparams_log_vector_roundtrip():
    theta = HyperParams(np.array([0.3, 2.5]), 1.7, 0.02, -0.4)
    z = theta.to_log_vector()
    assert z.shape == (5,)
    back = HyperParams.from_log_vector(z)
    assert np.allclose(back.lengthscales, theta.lengthscales)
    assert np.isclose(back.outputscale_var, theta.outputscale_var)
    assert np.isclose(back.noise_var, theta.noise_var)
    assert np.isclose(back.mean_const, theta.mean_const)


def test_dataset_requires_unit_cube():
    with pytest.raises(ValueError):
        Dataset(np.array([[1.5]]), np.array([0.0]))
    with pytest.raises(ValueError):
        Dataset(np.array([[0.5], [0.2]]), np.array([0.0]))


def test_lml_matches_dense_gaussian_logpdf():
    rng = np.random.default_rng(5)
    for kind in ("matern52", "rbf"):
        for d in (1, 3, 6):
            ds, theta = _random_problem(rng, 12, d)
            K = kernel_matrix(ds.X, ds.X, theta, kind)
            K[np.diag_indices_from(K)] += theta.noise_var
            ref = multivariate_normal.logpdf(
                ds.y, mean=np.full(ds.n, theta.mean_const), cov=K
            )
            val = log_marginal_likelihood(ds, theta, kind)
            assert abs(val - ref) < 1e-9


def test_lml_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    h = 1e-6
    for kind in ("matern52", "rbf"):
        for d in (1, 2, 4):
            ds, theta = _random_problem(rng, 10, d)
            _, grad = log_marginal_likelihood(ds, theta, kind, with_grad=True)
            z0 = theta.to_log_vector()
            for j in range(z0.shape[0]):
                zp, zm = z0.copy(), z0.copy()
                zp[j] += h
                zm[j] -= h
                fp = log_marginal_likelihood(ds, HyperParams.from_log_vector(zp), kind)
                fm = log_marginal_likelihood(ds, HyperParams.from_log_vector(zm), kind)
                fd = (fp - fm) / (2 * h)
                assert abs(grad[j] - fd) < 1e-4 * max(abs(fd), 1e-8)


def test_lml_empty_dataset_is_zero():
    theta = HyperParams(np.array([1.0]), 1.0, 0.1, 0.0)
    val, grad = log_marginal_likelihood(
        empty_dataset(1), theta, "matern52", with_grad=True
    )
    assert val == 0.0
    assert np.all(grad == 0.0)


def test_posterior_interpolates_at_small_noise():
    rng = np.random.default_rng(11)
    ds, _ = _random_problem(rng, 8, 2)
    theta = HyperParams(np.array([0.5, 0.5]), 1.0, 1e-10, 0.0)
    post = fit(ds, theta, "matern52")
    pred = post.predict(ds.X, include_noise=False)
    assert np.abs(pred.mean - ds.y).max() < 1e-3
    assert pred.var.max() < 1e-3


def test_posterior_reverts_to_prior_far_from_data():
    theta = HyperParams(np.array([0.02]), 1.4, 0.1, 0.6)
    ds = Dataset(np.array([[0.0]]), np.array([2.0]))
    post = fit(ds, theta, "matern52")
    pred = post.predict(np.array([[1.0]]), include_noise=False)
    assert abs(pred.mean[0] - 0.6) < 1e-6
    assert abs(pred.var[0] - 1.4) < 1e-6


def test_predict_include_noise_adds_noise_var():
    rng = np.random.default_rng(13)
    ds, theta = _random_problem(rng, 9, 2, noise_var=0.07)
    post = fit(ds, theta, "matern52")
    Xq = rng.uniform(size=(5, 2))
    latent = post.predict(Xq, include_noise=False)
    noisy = post.predict(Xq, include_noise=True)
    assert np.allclose(noisy.var - latent.var, 0.07)
    assert np.allclose(noisy.mean, latent.mean)


def test_fit_handles_duplicate_rows_with_jitter():
    X = np.array([[0.5], [0.5], [0.5], [0.1]])
    y = np.array([1.0, 1.0, 1.0, 0.0])
    theta = HyperParams(np.array([0.5]), 1.0, 0.0, 0.0)
    post = fit(Dataset(X, y), theta, "matern52")
    assert post.jitter > 0.0
    pred = post.predict(X[:1])
    assert np.isfinite(pred.mean[0])


def test_fantasize_matches_dense_refit():
    rng = np.random.default_rng(17)
    for kind in ("matern52", "rbf"):
        ds, theta = _random_problem(rng, 9, 2, noise_var=0.1)
        post = fit(ds, theta, kind)
        x_star = rng.uniform(size=(1, 2))
        f_star = 0.7
        fant = fantasize(post, x_star, f_star)

        X_all = np.vstack([ds.X, x_star])
        y_all = np.append(ds.y, f_star)
        K = kernel_matrix(X_all, X_all, theta, kind)
        K[np.diag_indices_from(K)] += np.append(np.full(9, theta.noise_var), 0.0)
        Xq = rng.uniform(size=(30, 2))
        Ks = kernel_matrix(X_all, Xq, theta, kind)
        sol = np.linalg.solve(K, y_all - theta.mean_const)
        mean_ref = theta.mean_const + Ks.T @ sol
        var_ref = theta.outputscale_var - np.sum(
            Ks * np.linalg.solve(K, Ks), axis=0
        )
        pred = fant.predict(Xq, include_noise=False)
        assert np.abs(pred.mean - mean_ref).max() < 1e-8
        assert np.abs(pred.var - np.maximum(var_ref, 0.0)).max() < 1e-8


def test_fantasize_pins_latent_at_fantasy_point():
    rng = np.random.default_rng(19)
    ds, theta = _random_problem(rng, 8, 2, noise_var=0.2)
    post = fit(ds, theta, "matern52")
    x_star = np.array([[0.42, 0.17]])
    fant = fantasize(post, x_star, -0.3)
    pred = fant.predict(x_star, include_noise=False)
    assert abs(pred.mean[0] - (-0.3)) < 1e-7
    assert pred.var[0] < 1e-7


def test_fantasize_stacks_multiple_points():
    rng = np.random.default_rng(23)
    ds, theta = _random_problem(rng, 6, 1, noise_var=0.05)
    post = fit(ds, theta, "matern52")
    f1 = fantasize(post, np.array([[0.3]]), 0.5)
    f2 = fantasize(f1, np.array([[0.8]]), -0.1)
    assert f2.n == 8
    pred = f2.predict(np.array([[0.3], [0.8]]), include_noise=False)
    assert np.allclose(pred.mean, [0.5, -0.1], atol=1e-6)


def test_fantasize_degenerate_point_falls_back_to_refit():
    # fantasizing exactly on top of an existing noiseless fantasy makes
    # the rank-1 update break down; the refit fallback must engage
    rng = np.random.default_rng(29)
    ds, theta = _random_problem(rng, 6, 1, noise_var=0.05)
    post = fit(ds, theta, "matern52")
    x_star = np.array([[0.55]])
    f1 = fantasize(post, x_star, 0.2)
    with pytest.warns(RuntimeWarning):
        f2 = fantasize(f1, x_star, 0.2)
    assert f2.refit_fallback
    pred = f2.predict(x_star, include_noise=False)
    assert np.isfinite(pred.mean[0])


def test_truncated_moments_at_mean_threshold():
    # truncating a normal at its own mean gives the known half-normal
    # moments: mean - sigma sqrt(2/pi) and var sigma^2 (1 - 2/pi)
    g = GaussianPredict(np.array([2.0]), np.array([4.0]))
    t = truncated_moments(g, np.array([2.0]))
    assert abs(t.mean[0] - (2.0 - 2.0 * np.sqrt(2 / np.pi))) < 1e-12
    assert abs(t.var[0] - 4.0 * (1 - 2 / np.pi)) < 1e-12


def test_truncated_moments_match_sampling():
    rng = np.random.default_rng(31)
    g = GaussianPredict(np.array([0.0, 1.0, -2.0]), np.array([1.0, 4.0, 0.25]))
    uppers = np.array([0.0, 0.5, -1.0])
    t = truncated_moments(g, uppers)
    for i in range(3):
        draws = rng.normal(g.mean[i], np.sqrt(g.var[i]), 1_000_000)
        draws = draws[draws <= uppers[i]]
        assert abs(t.mean[i] - draws.mean()) < 1e-2
        assert abs(t.var[i] - draws.var()) < 1e-2


def test_truncated_moments_deep_tail_collapses_to_threshold():
    g = GaussianPredict(np.array([0.0]), np.array([1.0]))
    t = truncated_moments(g, np.array([-12.0]))
    assert abs(t.mean[0] - (-12.0)) < 0.15
    assert t.var[0] >= 1e-12
    assert t.var[0] < 0.05


def test_truncated_moments_loose_threshold_changes_nothing():
    g = GaussianPredict(np.array([0.0]), np.array([1.0]))
    t = truncated_moments(g, np.array([40.0]))
    assert abs(t.mean[0]) < 1e-8
    assert abs(t.var[0] - 1.0) < 1e-8


def test_empty_dataset_prior_predictions():
    theta = HyperParams(np.array([0.5, 0.5]), 1.3, 0.1, 0.2)
    post = fit(empty_dataset(2), theta, "matern52")
    pred = post.predict(np.array([[0.4, 0.6]]), include_noise=True)
    assert abs(pred.mean[0] - 0.2) < 1e-12
    assert abs(pred.var[0] - 1.4) < 1e-12
