"""Differentiable posterior function draws and optimum conditioning.

A posterior sample is a random-feature prior draw plus an exact data
correction, so it can be evaluated and differentiated anywhere without
reconditioning.  Sampled optima feed the optimum-conditioned predictive
models: condition the GP on a noiseless observation f(x*) = f* and
truncate the latent predictive above f*.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve
from scipy.stats import qmc

from .gp import (
    GPPosterior,
    GaussianPredict,
    fantasize,
    kernel_matrix,
    truncated_moments,
)
from .utils import as_matrix, rng_from

SQRT5 = np.sqrt(5.0)
CONDITIONING = ("both", "location", "value")


@dataclass
class PathSample:
    """One function draw, evaluable and differentiable at any point."""

    theta: object
    kind: str
    omega: np.ndarray
    phases: np.ndarray
    w: np.ndarray
    X_train: np.ndarray
    v: np.ndarray
    amp: float

    @property
    def dim(self):
        return self.omega.shape[1]

    def _as_points(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1 and self.dim > 1:
            if X.shape[0] != self.dim:
                raise ValueError(
                    f"point has length {X.shape[0]}, expected {self.dim}"
                )
            X = X[None, :]
        return as_matrix(X, "X")

    def __call__(self, X):
        """Function values at a batch of points, shape (b,)."""
        X = self._as_points(X)
        vals = (self.amp * np.cos(X @ self.omega.T + self.phases)) @ self.w
        vals = vals + self.theta.mean_const
        if self.v.shape[0]:
            vals = vals + kernel_matrix(X, self.X_train, self.theta, self.kind) @ self.v
        return vals

    def grad(self, X):
        """Gradients at a batch of points, shape (b, d)."""
        X = self._as_points(X)
        ls2 = self.theta.lengthscales**2
        s = np.sin(X @ self.omega.T + self.phases)
        g = -(self.amp * s * self.w) @ self.omega
        if self.v.shape[0]:
            diff = (X[:, None, :] - self.X_train[None, :, :]) / ls2
            sq = np.maximum(
                np.sum(diff * (X[:, None, :] - self.X_train[None, :, :]), axis=2), 0.0
            )
            r = np.sqrt(sq)
            s2f = self.theta.outputscale_var
            if self.kind == "matern52":
                coeff = -(5.0 / 3.0) * s2f * (1.0 + SQRT5 * r) * np.exp(-SQRT5 * r)
            else:
                coeff = -s2f * np.exp(-0.5 * sq)
            g = g + np.einsum("bn,bnd->bd", coeff * self.v, diff)
        return g


def draw_pathwise_sample(posterior, num_features=2048, seed=0):
    """Draw one posterior function sample via random Fourier features.

    The prior part uses spectral frequencies of the model's kernel
    (Student-t with 5 degrees of freedom for Matern-5/2, Gaussian for
    the squared exponential), scaled by the inverse lengthscales.  The
    data correction interpolates the residual between a noisy resample
    of the prior draw and the observations.
    """
    rng = rng_from(seed)
    th = posterior.theta
    d = th.dim
    F = int(num_features)
    z = rng.standard_normal((F, d))
    if posterior.kind == "matern52":
        u = rng.chisquare(5.0, size=(F, 1))
        z = z * np.sqrt(5.0 / u)
    omega = z / th.lengthscales
    phases = rng.uniform(0.0, 2.0 * np.pi, F)
    w = rng.standard_normal(F)
    amp = np.sqrt(2.0 * th.outputscale_var / F)

    n = posterior.n
    if n == 0:
        v = np.zeros(0)
        X_train = np.zeros((0, d))
    else:
        X_train = posterior.X_all
        prior_at_X = (amp * np.cos(X_train @ omega.T + phases)) @ w
        n_obs = posterior.dataset.n
        noise = np.zeros(n)
        noise[:n_obs] = np.sqrt(th.noise_var) * rng.standard_normal(n_obs)
        y_all = np.concatenate([posterior.dataset.y, posterior.y_fantasy])
        resid = y_all - th.mean_const - prior_at_X - noise
        v = cho_solve((posterior.chol, True), resid)
    return PathSample(
        theta=th,
        kind=posterior.kind,
        omega=omega,
        phases=phases,
        w=w,
        X_train=X_train,
        v=v,
        amp=amp,
    )


@dataclass(frozen=True)
class OptimumSample:
    """Location and value of a sampled optimum (noiseless)."""

    x: np.ndarray
    f: float


def maximize_sample(path, num_starts=256, num_top=8, num_steps=50, seed=0):
    """Maximize a function draw over the unit cube.

    Quasi-random candidates seed a projected gradient ascent on the top
    few; the returned value is the sample evaluated at the returned
    point, so the pair is exactly consistent.
    """
    rng = rng_from(seed)
    d = path.dim
    sampler = qmc.Sobol(d=d, scramble=True, seed=rng)
    X = sampler.random(num_starts)
    vals = path(X)
    top = np.argsort(vals)[-num_top:]
    pts = X[top].copy()
    best = vals[top].copy()
    steps = np.full(num_top, 0.05)
    for _ in range(num_steps):
        g = path.grad(pts)
        norms = np.linalg.norm(g, axis=1, keepdims=True)
        direction = g / np.maximum(norms, 1e-12)
        cand = np.clip(pts + steps[:, None] * direction, 0.0, 1.0)
        cand_vals = path(cand)
        improved = cand_vals > best
        pts[improved] = cand[improved]
        best[improved] = cand_vals[improved]
        steps = np.where(improved, np.minimum(steps * 1.2, 0.25), steps * 0.5)
        if np.all(steps < 1e-6):
            break
    k = int(np.argmax(best))
    x_star = pts[k]
    f_star = float(path(x_star[None, :])[0])
    return OptimumSample(x=x_star, f=f_star)


@dataclass
class ConditionedModel:
    """Predictive model conditioned on a sampled optimum.

    Wraps a (possibly fantasized) posterior; if `f_star` is set, the
    latent predictive is truncated above it before noise is added.
    """

    base: GPPosterior
    f_star: float | None = None

    def predict(self, X, include_noise=False):
        g = self.base.predict(X, include_noise=False)
        if self.f_star is not None:
            g = truncated_moments(g, self.f_star)
        if include_noise:
            g = GaussianPredict(g.mean, g.var + self.base.theta.noise_var)
        return g


def condition_on_optimum(posterior, optimum, conditioning="both"):
    """Condition a posterior on a sampled optimum.

    conditioning : {"both", "location", "value"}
        "both" adds a noiseless observation f(x*) = f* and truncates the
        latent at f*; "location" only adds the observation, pinning the
        model's own mean at x*; "value" only truncates.
    """
    if conditioning not in CONDITIONING:
        raise ValueError(f"unknown conditioning {conditioning!r}")
    x_star = np.asarray(optimum.x, dtype=float)[None, :]
    if conditioning == "value":
        return ConditionedModel(base=posterior, f_star=optimum.f)
    if conditioning == "location":
        f_here = float(posterior.predict(x_star).mean[0])
        return ConditionedModel(base=fantasize(posterior, x_star, f_here), f_star=None)
    return ConditionedModel(base=fantasize(posterior, x_star, optimum.f), f_star=optimum.f)
