"""Gaussian process core: kernels, exact inference, fantasies, truncation.

All model fitting happens on normalized data: inputs live in the unit
cube and targets are standardized by the caller.  A model is defined by
an ARD kernel (Matern-5/2 by default, squared exponential optional), a
constant mean and Gaussian observation noise.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.stats import norm

from .utils import LOG_2PI, as_matrix, as_vector, check_unit_cube

KERNELS = ("matern52", "rbf")
JITTERS = (0.0, 1e-8, 1e-6, 1e-4)
SQRT5 = np.sqrt(5.0)


@dataclass(frozen=True)
class Dataset:
    """Observations on the unit cube with standardized targets.

    Parameters
    ----------
    X : ndarray, shape (n, d)
        Input locations, each coordinate in [0, 1].
    y : ndarray, shape (n,)
        Standardized targets.
    """

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = check_unit_cube(as_matrix(self.X))
        y = as_vector(self.y) if np.size(self.y) else np.zeros(0)
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def dim(self):
        return self.X.shape[1]


def empty_dataset(dim):
    """Dataset with zero observations in d dimensions."""
    return Dataset(np.zeros((0, dim)), np.zeros(0))


@dataclass(frozen=True)
class HyperParams:
    """Kernel and likelihood hyperparameters.

    Scale parameters are strictly positive, except the noise variance
    which may be zero for noiseless modeling.
    """

    lengthscales: np.ndarray
    outputscale_var: float
    noise_var: float
    mean_const: float = 0.0

    def __post_init__(self):
        ls = as_vector(self.lengthscales, "lengthscales")
        if np.any(ls <= 0):
            raise ValueError("lengthscales must be strictly positive")
        if not (self.outputscale_var > 0 and np.isfinite(self.outputscale_var)):
            raise ValueError("outputscale_var must be strictly positive and finite")
        if not (self.noise_var >= 0 and np.isfinite(self.noise_var)):
            raise ValueError("noise_var must be nonnegative and finite")
        if not np.isfinite(self.mean_const):
            raise ValueError("mean_const must be finite")
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "outputscale_var", float(self.outputscale_var))
        object.__setattr__(self, "noise_var", float(self.noise_var))
        object.__setattr__(self, "mean_const", float(self.mean_const))

    @property
    def dim(self):
        return self.lengthscales.shape[0]

    def to_log_vector(self):
        """Pack as [log lengthscales, log outputscale, log noise, mean]."""
        return np.concatenate(
            [
                np.log(self.lengthscales),
                [np.log(self.outputscale_var), np.log(self.noise_var), self.mean_const],
            ]
        )

    @staticmethod
    def from_log_vector(z):
        z = as_vector(z, "z")
        d = z.shape[0] - 3
        if d < 1:
            raise ValueError("log vector needs at least 4 entries")
        return HyperParams(
            lengthscales=np.exp(z[:d]),
            outputscale_var=float(np.exp(z[d])),
            noise_var=float(np.exp(z[d + 1])),
            mean_const=float(z[d + 2]),
        )


@dataclass
class GaussianPredict:
    """Gaussian predictive marginals at a batch of points."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.var = np.asarray(self.var, dtype=float)
        if self.mean.shape != self.var.shape:
            raise ValueError("mean and var must share a shape")
        if np.any(self.var < 0):
            raise ValueError("var must be nonnegative")


def _scaled_sqdists(X1, X2, lengthscales):
    """Pairwise sum_i (x_i - x'_i)^2 / l_i^2, clipped at zero."""
    A = X1 / lengthscales
    B = X2 / lengthscales
    r2 = (
        np.sum(A * A, axis=1)[:, None]
        + np.sum(B * B, axis=1)[None, :]
        - 2.0 * A @ B.T
    )
    return np.maximum(r2, 0.0)


def _base_corr(r2, kind):
    """Unit-variance correlation as a function of the scaled distance."""
    if kind == "matern52":
        r = np.sqrt(r2)
        return (1.0 + SQRT5 * r + (5.0 / 3.0) * r2) * np.exp(-SQRT5 * r)
    if kind == "rbf":
        return np.exp(-0.5 * r2)
    raise ValueError(f"unknown kernel kind {kind!r}")


def kernel_matrix(X1, X2, theta, kind="matern52"):
    """Cross-covariance matrix of the ARD kernel.

    Parameters
    ----------
    X1 : ndarray, shape (n1, d)
    X2 : ndarray, shape (n2, d)
    theta : HyperParams
    kind : {"matern52", "rbf"}

    Returns
    -------
    ndarray, shape (n1, n2)
    """
    X1 = as_matrix(X1, "X1")
    X2 = as_matrix(X2, "X2")
    if X1.shape[1] != X2.shape[1] or X1.shape[1] != theta.dim:
        raise ValueError("dimension mismatch between inputs and lengthscales")
    r2 = _scaled_sqdists(X1, X2, theta.lengthscales)
    return theta.outputscale_var * _base_corr(r2, kind)


@dataclass
class GPPosterior:
    """Cholesky-factored exact GP posterior.

    Fantasy observations, if any, occupy the trailing rows of `X_all`
    and are conditioned on noiselessly (no observation noise on their
    diagonal entries).
    """

    dataset: Dataset
    theta: HyperParams
    kind: str
    chol: np.ndarray
    alpha: np.ndarray
    X_all: np.ndarray
    y_fantasy: np.ndarray = field(default_factory=lambda: np.zeros(0))
    jitter: float = 0.0
    refit_fallback: bool = False

    @property
    def n(self):
        return self.X_all.shape[0]

    @property
    def num_fantasy(self):
        return self.y_fantasy.shape[0]

    def predict(self, X, include_noise=False):
        """Predictive Gaussian marginals at a batch of points.

        Parameters
        ----------
        X : ndarray, shape (b, d)
        include_noise : bool
            Add the observation noise variance to the latent variance.

        Returns
        -------
        GaussianPredict with arrays of shape (b,)
        """
        X = as_matrix(X, "X")
        th = self.theta
        if self.n == 0:
            mean = np.full(X.shape[0], th.mean_const)
            var = np.full(X.shape[0], th.outputscale_var)
        else:
            Ks = kernel_matrix(self.X_all, X, th, self.kind)
            V = solve_triangular(self.chol, Ks, lower=True)
            mean = th.mean_const + Ks.T @ self.alpha
            var = np.maximum(th.outputscale_var - np.sum(V * V, axis=0), 0.0)
        if include_noise:
            var = var + th.noise_var
        return GaussianPredict(mean, var)


def _extended_system(dataset, theta, kind, X_fantasy=None, y_fantasy=None):
    """Covariance of observed plus fantasy points, noise on observed only."""
    X_f = np.zeros((0, dataset.dim)) if X_fantasy is None else as_matrix(X_fantasy)
    y_f = np.zeros(0) if y_fantasy is None else as_vector(y_fantasy)
    X_all = np.vstack([dataset.X, X_f])
    y_all = np.concatenate([dataset.y, y_f])
    K = kernel_matrix(X_all, X_all, theta, kind)
    noise_diag = np.concatenate(
        [np.full(dataset.n, theta.noise_var), np.zeros(X_f.shape[0])]
    )
    return X_all, y_all, K + np.diag(noise_diag)


def _chol_with_jitter(Ky):
    """Cholesky of Ky, escalating diagonal jitter on failure."""
    for jitter in JITTERS:
        try:
            L = cholesky(Ky + jitter * np.eye(Ky.shape[0]), lower=True)
            return L, jitter
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError(
        "covariance matrix is not positive definite even with jitter 1e-4"
    )


def fit(dataset, theta, kind="matern52"):
    """Fit the exact GP posterior for fixed hyperparameters.

    Returns
    -------
    GPPosterior
    """
    if kind not in KERNELS:
        raise ValueError(f"unknown kernel kind {kind!r}")
    if dataset.n == 0:
        return GPPosterior(
            dataset=dataset,
            theta=theta,
            kind=kind,
            chol=np.zeros((0, 0)),
            alpha=np.zeros(0),
            X_all=dataset.X,
        )
    if dataset.dim != theta.dim:
        raise ValueError("dataset dimension does not match lengthscales")
    X_all, y_all, Ky = _extended_system(dataset, theta, kind)
    L, jitter = _chol_with_jitter(Ky)
    alpha = cho_solve((L, True), y_all - theta.mean_const)
    return GPPosterior(
        dataset=dataset,
        theta=theta,
        kind=kind,
        chol=L,
        alpha=alpha,
        X_all=X_all,
        jitter=jitter,
    )


def log_marginal_likelihood(dataset, theta, kind="matern52", with_grad=False):
    """Log marginal likelihood of the data under fixed hyperparameters.

    The gradient is taken with respect to the log-space packing
    [log lengthscales, log outputscale, log noise, mean].

    Returns
    -------
    value : float
    grad : ndarray, shape (d + 3,), only when `with_grad`
    """
    d = dataset.dim
    if dataset.n == 0:
        return (0.0, np.zeros(d + 3)) if with_grad else 0.0
    X, y = dataset.X, dataset.y
    n = dataset.n
    r2 = _scaled_sqdists(X, X, theta.lengthscales)
    K = theta.outputscale_var * _base_corr(r2, kind)
    Ky = K + theta.noise_var * np.eye(n)
    L, _ = _chol_with_jitter(Ky)
    resid = y - theta.mean_const
    alpha = cho_solve((L, True), resid)
    value = float(
        -0.5 * resid @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * LOG_2PI
    )
    if not with_grad:
        return value

    # d lml / d param = 0.5 tr((alpha alpha^T - Ky^-1) dKy/dparam)
    Kinv = cho_solve((L, True), np.eye(n))
    A = np.outer(alpha, alpha) - Kinv
    grad = np.zeros(d + 3)
    if kind == "matern52":
        r = np.sqrt(r2)
        # dk/d log l_i = (5/3) s2 (1 + sqrt5 r) exp(-sqrt5 r) * D_i^2 / l_i^2
        G = (5.0 / 3.0) * theta.outputscale_var * (1.0 + SQRT5 * r) * np.exp(-SQRT5 * r)
    else:
        G = K
    AG = A * G
    for i in range(d):
        Di2 = (X[:, i][:, None] - X[:, i][None, :]) ** 2 / theta.lengthscales[i] ** 2
        grad[i] = 0.5 * np.sum(AG * Di2)
    grad[d] = 0.5 * np.sum(A * K)
    grad[d + 1] = 0.5 * theta.noise_var * np.trace(A)
    grad[d + 2] = float(np.sum(alpha))
    return value, grad


def fantasize(posterior, x_star, f_star):
    """Condition on a noiseless observation f(x*) = f* in O(n^2).

    Appends one row to the Cholesky factor instead of refitting.  If the
    rank-one update breaks down numerically the model is refit from
    scratch and flagged through `refit_fallback`.

    Returns
    -------
    GPPosterior over the extended point set.
    """
    x_star = as_matrix(x_star, "x_star")
    if x_star.shape[0] != 1:
        raise ValueError("fantasize conditions on a single point")
    th = posterior.theta
    f_star = float(f_star)
    n = posterior.n
    y_fantasy = np.concatenate([posterior.y_fantasy, [f_star]])
    if n == 0:
        k_ss = kernel_matrix(x_star, x_star, th, posterior.kind)[0, 0]
        L = np.array([[np.sqrt(max(k_ss, 1e-12))]])
        alpha = np.array([(f_star - th.mean_const) / max(k_ss, 1e-12)])
        return GPPosterior(
            dataset=posterior.dataset,
            theta=th,
            kind=posterior.kind,
            chol=L,
            alpha=alpha,
            X_all=x_star,
            y_fantasy=y_fantasy,
        )
    k_s = kernel_matrix(posterior.X_all, x_star, th, posterior.kind)[:, 0]
    k_ss = kernel_matrix(x_star, x_star, th, posterior.kind)[0, 0] + posterior.jitter
    b = solve_triangular(posterior.chol, k_s, lower=True)
    d2 = k_ss - b @ b
    if d2 <= 0.0 or not np.isfinite(d2):
        # degenerate update, e.g. x* coincides with an existing point
        warnings.warn("fantasize rank-one update degenerate, refitting", RuntimeWarning)
        return _refit_with_fantasy(posterior, x_star, y_fantasy)
    dd = np.sqrt(max(d2, 1e-12 * max(th.outputscale_var, 1.0)))
    L_new = np.zeros((n + 1, n + 1))
    L_new[:n, :n] = posterior.chol
    L_new[n, :n] = b
    L_new[n, n] = dd
    X_all = np.vstack([posterior.X_all, x_star])
    resid = np.concatenate([posterior.dataset.y, y_fantasy]) - th.mean_const
    alpha = cho_solve((L_new, True), resid)
    return GPPosterior(
        dataset=posterior.dataset,
        theta=th,
        kind=posterior.kind,
        chol=L_new,
        alpha=alpha,
        X_all=X_all,
        y_fantasy=y_fantasy,
        jitter=posterior.jitter,
    )


def _refit_with_fantasy(posterior, x_star, y_fantasy):
    th = posterior.theta
    n_obs = posterior.dataset.n
    X_f = np.vstack([posterior.X_all[n_obs:], x_star])
    X_all, y_all, Ky = _extended_system(
        posterior.dataset, th, posterior.kind, X_f, y_fantasy
    )
    L, jitter = _chol_with_jitter(Ky)
    alpha = cho_solve((L, True), y_all - th.mean_const)
    return GPPosterior(
        dataset=posterior.dataset,
        theta=th,
        kind=posterior.kind,
        chol=L,
        alpha=alpha,
        X_all=X_all,
        y_fantasy=y_fantasy,
        jitter=jitter,
        refit_fallback=True,
    )


def truncated_moments(g, upper):
    """Moments of Gaussians upper-truncated at a bound.

    Supports elementwise arrays: `g` holds a batch of Gaussians and
    `upper` broadcasts against it.  For a bound far below the mean
    (more than 8 standard deviations) the result degenerates to a point
    mass at the bound with floor variance 1e-12.

    Returns
    -------
    GaussianPredict with the truncated mean and variance.
    """
    mean = np.asarray(g.mean, dtype=float)
    var = np.asarray(g.var, dtype=float)
    upper = np.broadcast_to(np.asarray(upper, dtype=float), mean.shape)
    if np.any(~np.isfinite(upper)):
        raise ValueError("upper bound must be finite")
    sd = np.sqrt(np.maximum(var, 1e-300))
    beta = (upper - mean) / sd
    degenerate = beta < -8.0
    beta_safe = np.where(degenerate, 0.0, beta)
    # hazard phi(beta)/Phi(beta), computed through log densities
    log_h = norm.logpdf(beta_safe) - norm.logcdf(beta_safe)
    h = np.exp(log_h)
    t_mean = mean - sd * h
    t_var = var * np.maximum(1.0 - beta_safe * h - h * h, 0.0)
    t_mean = np.where(degenerate, upper, t_mean)
    t_var = np.where(degenerate, 1e-12, np.maximum(t_var, 1e-12))
    return GaussianPredict(t_mean, t_var)
