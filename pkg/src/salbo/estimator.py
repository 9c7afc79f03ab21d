"""Scikit-learn style regressor over the fully Bayesian GP ensemble."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .acquisition import ModelEnsemble, marginal_predict
from .distances import moment_match
from .gp import Dataset
from .hyper import MCMCConfig, map_estimate, nuts_sample
from .priors import make_prior
from .utils import as_matrix, as_vector, rng_from


class FullyBayesianGPRegressor(RegressorMixin, BaseEstimator):
    """GP regression with hyperparameters integrated out by sampling.

    Inputs are min-max normalized to the unit cube (using `bounds` when
    given, else the data range) and targets standardized internally.
    `fit` draws hyperparameter sets from their posterior with NUTS (or
    computes a MAP point with `inference="map"`); `predict` returns the
    moment-matched mixture on the original scales.

    Parameters
    ----------
    kernel : {"matern52", "rbf"}
    prior : registry name, e.g. "lognormal_wide", "gamma_default", "saas"
    num_samples, warmup, thinning : MCMC settings
    inference : {"nuts", "map"}
    bounds : array-like (dim, 2) or None
        Input box; None rescales from the training data.
    random_state : int seed for the sampler
    """

    def __init__(
        self,
        kernel="matern52",
        prior="lognormal_wide",
        num_samples=16,
        warmup=256,
        thinning=16,
        inference="nuts",
        map_restarts=10,
        bounds=None,
        random_state=0,
    ):
        self.kernel = kernel
        self.prior = prior
        self.num_samples = num_samples
        self.warmup = warmup
        self.thinning = thinning
        self.inference = inference
        self.map_restarts = map_restarts
        self.bounds = bounds
        self.random_state = random_state

    def _normalize_X(self, X):
        span = self.X_max_ - self.X_min_
        return (X - self.X_min_) / np.where(span > 0, span, 1.0)

    def fit(self, X, y):
        """Fit the hyperparameter posterior on (X, y)."""
        X = as_matrix(X, "X")
        y = as_vector(y, "y")
        if X.shape[0] != y.shape[0]:
            raise ValueError("X and y have different lengths")
        if X.shape[0] < 1:
            raise ValueError("need at least one observation")
        if self.bounds is not None:
            b = np.asarray(self.bounds, dtype=float)
            self.X_min_, self.X_max_ = b[:, 0], b[:, 1]
        else:
            self.X_min_, self.X_max_ = X.min(axis=0), X.max(axis=0)
        X01 = np.clip(self._normalize_X(X), 0.0, 1.0)
        self.y_mean_ = float(np.mean(y))
        sd = float(np.std(y))
        self.y_std_ = sd if sd > 1e-12 else 1.0
        dataset = Dataset(X01, (y - self.y_mean_) / self.y_std_)
        prior = make_prior(self.prior)
        if self.inference == "map":
            thetas = [
                map_estimate(
                    dataset,
                    prior,
                    restarts=self.map_restarts,
                    seed=rng_from(self.random_state),
                    kind=self.kernel,
                )
            ]
        elif self.inference == "nuts":
            config = MCMCConfig(
                num_samples=self.num_samples,
                warmup=self.warmup,
                thinning=self.thinning,
            )
            samples = nuts_sample(
                dataset, prior, config, seed=self.random_state, kind=self.kernel
            )
            thetas = samples.thetas
            self.sample_set_ = samples
        else:
            raise ValueError(f"unknown inference {self.inference!r}")
        self.ensemble_ = ModelEnsemble.from_thetas(
            dataset, thetas, self.kernel, y_shift=self.y_mean_, y_scale=self.y_std_
        )
        self.n_features_in_ = X.shape[1]
        return self

    def _check_fitted(self):
        if not hasattr(self, "ensemble_"):
            raise RuntimeError("this estimator is not fitted yet; call fit first")

    def predict(self, X, return_std=False, include_noise=False):
        """Moment-matched predictive mean (and std) on the original scale."""
        self._check_fitted()
        X01 = np.clip(self._normalize_X(as_matrix(X, "X")), 0.0, 1.0)
        mix = marginal_predict(self.ensemble_, X01, include_noise=include_noise)
        mm = moment_match(mix)
        mean = mm.mean * self.y_std_ + self.y_mean_
        if not return_std:
            return mean
        return mean, np.sqrt(mm.var) * self.y_std_

    def predict_mixture(self, X, include_noise=False):
        """Per-model predictive means and stds, shape (M, n)."""
        self._check_fitted()
        X01 = np.clip(self._normalize_X(as_matrix(X, "X")), 0.0, 1.0)
        mix = marginal_predict(self.ensemble_, X01, include_noise=include_noise)
        return (
            mix.means * self.y_std_ + self.y_mean_,
            np.sqrt(mix.vars) * self.y_std_,
        )

    @property
    def hyperparameters_(self):
        """Sampled hyperparameter sets (normalized-data scale)."""
        self._check_fitted()
        return [p.theta for p in self.ensemble_.posteriors]
