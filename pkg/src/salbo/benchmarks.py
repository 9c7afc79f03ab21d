"""Benchmark tasks, GP-sample objectives and evaluation metrics.

Tasks are exposed in maximization form on the unit cube: the harness
works with normalized inputs and the task maps them to its native
domain.  Known optima are stored for regret tracking where available.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import gp
from .acquisition import marginal_predict, optimize_acquisition
from .pathwise import draw_pathwise_sample, maximize_sample
from .utils import as_matrix, gaussian_logpdf, rng_from


@dataclass
class Task:
    """A noisy objective in maximization form.

    `fn` maps points in the native domain to objective values (already
    sign-flipped for functions stated as minimization problems);
    `optimum_value` is the global maximum when known.
    """

    name: str
    bounds: np.ndarray
    noise_std: float
    fn: callable
    optimum_value: float | None = None
    optimum_location: np.ndarray | None = None

    def __post_init__(self):
        self.bounds = np.asarray(self.bounds, dtype=float)
        if self.bounds.ndim != 2 or self.bounds.shape[1] != 2:
            raise ValueError("bounds must have shape (dim, 2)")
        if np.any(self.bounds[:, 1] <= self.bounds[:, 0]):
            raise ValueError("upper bounds must exceed lower bounds")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")

    @property
    def dim(self):
        return self.bounds.shape[0]

    def to_domain(self, X01):
        """Map unit-cube points to the native domain."""
        X01 = as_matrix(X01, "X01")
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        return lo + X01 * (hi - lo)

    def noiseless(self, X01):
        """Objective values (no noise) at unit-cube points."""
        return np.asarray(self.fn(self.to_domain(X01)), dtype=float)

    def observe(self, X01, rng):
        """Noisy observations at unit-cube points."""
        y = self.noiseless(X01)
        return y + self.noise_std * rng.standard_normal(y.shape)

    @property
    def optimum_location01(self):
        if self.optimum_location is None:
            return None
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        return (np.asarray(self.optimum_location) - lo) / (hi - lo)


def _branin_min(X):
    x1, x2 = X[:, 0], X[:, 1]
    b = 5.1 / (4.0 * np.pi**2)
    c = 5.0 / np.pi
    s = 10.0
    t = 1.0 / (8.0 * np.pi)
    return (x2 - b * x1**2 + c * x1 - 6.0) ** 2 + s * (1.0 - t) * np.cos(x1) + s


def _rosenbrock_min(X):
    return np.sum(
        100.0 * (X[:, 1:] - X[:, :-1] ** 2) ** 2 + (1.0 - X[:, :-1]) ** 2, axis=1
    )


_HARTMANN_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_HARTMANN6_A = np.array(
    [
        [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
        [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
        [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
        [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
    ]
)
_HARTMANN6_P = 1e-4 * np.array(
    [
        [1312.0, 1696.0, 5569.0, 124.0, 8283.0, 5886.0],
        [2329.0, 4135.0, 8307.0, 3736.0, 1004.0, 9991.0],
        [2348.0, 1451.0, 3522.0, 2883.0, 3047.0, 6650.0],
        [4047.0, 8828.0, 8732.0, 5743.0, 1091.0, 381.0],
    ]
)
_HARTMANN3_A = np.array(
    [[3.0, 10.0, 30.0], [0.1, 10.0, 35.0], [3.0, 10.0, 30.0], [0.1, 10.0, 35.0]]
)
_HARTMANN3_P = 1e-4 * np.array(
    [
        [3689.0, 1170.0, 2673.0],
        [4699.0, 4387.0, 7470.0],
        [1091.0, 8732.0, 5547.0],
        [381.0, 5743.0, 8828.0],
    ]
)


def _hartmann_sum(X, A, P):
    inner = np.sum(A[None, :, :] * (X[:, None, :] - P[None, :, :]) ** 2, axis=2)
    return np.sum(_HARTMANN_ALPHA[None, :] * np.exp(-inner), axis=1)


def _hartmann3_min(X):
    return -_hartmann_sum(X, _HARTMANN3_A, _HARTMANN3_P)


def _hartmann4_min(X):
    s = _hartmann_sum(X, _HARTMANN6_A[:, :4], _HARTMANN6_P[:, :4])
    return (1.1 - s) / 0.839


def _hartmann6_min(X):
    return -_hartmann_sum(X, _HARTMANN6_A, _HARTMANN6_P)


def _ackley_min(X):
    d = X.shape[1]
    term1 = -20.0 * np.exp(-0.2 * np.sqrt(np.mean(X**2, axis=1)))
    term2 = -np.exp(np.mean(np.cos(2.0 * np.pi * X), axis=1))
    return term1 + term2 + 20.0 + np.e


def _ishigami_min(X):
    x1, x2, x3 = X[:, 0], X[:, 1], X[:, 2]
    return np.sin(x1) + 7.0 * np.sin(x2) ** 2 + 0.1 * x3**4 * np.sin(x1)


def _gramacy1d_min(X):
    x = X[:, 0]
    return np.sin(10.0 * np.pi * x) / (2.0 * x) + (x - 1.0) ** 4


def _higdon_min(X):
    x = X[:, 0]
    low = np.sin(np.pi * x / 5.0) + 0.2 * np.cos(4.0 * np.pi * x / 5.0)
    high = x / 10.0 - 1.0
    return np.where(x < 10.0, low, high)


def _gramacy2d_min(X):
    x1, x2 = X[:, 0], X[:, 1]
    return x1 * np.exp(-(x1**2) - x2**2)


def _negated(fn):
    return lambda X: -fn(X)


# name -> (min-form fn, bounds, default noise std, known minimum value,
# one minimizer); optima in the native domain
_CATALOG = {
    "branin": (
        _branin_min,
        [[-5.0, 10.0], [0.0, 15.0]],
        0.5,
        0.39788735772973816,
        [-np.pi, 12.275],
    ),
    "rosenbrock2": (_rosenbrock_min, [[-1.5, 1.5]] * 2, 2.5, 0.0, [1.0, 1.0]),
    "rosenbrock4": (_rosenbrock_min, [[-1.5, 1.5]] * 4, 2.5, 0.0, [1.0] * 4),
    "hartmann3": (
        _hartmann3_min,
        [[0.0, 1.0]] * 3,
        0.5,
        -3.862779787332659,
        [0.11458889, 0.55564889, 0.85254698],
    ),
    "hartmann4": (
        _hartmann4_min,
        [[0.0, 1.0]] * 4,
        0.5,
        -3.1344941412223957,
        [0.18739526, 0.19415152, 0.55791777, 0.26477962],
    ),
    "hartmann6": (
        _hartmann6_min,
        [[0.0, 1.0]] * 6,
        0.5,
        -3.322368011415514,
        [0.20168951, 0.15001069, 0.47687397, 0.27533243, 0.31165161, 0.65730053],
    ),
    "ackley4": (_ackley_min, [[-32.768, 32.768]] * 4, 0.5, 0.0, [0.0] * 4),
    "gramacy1d": (_gramacy1d_min, [[0.5, 2.5]], 0.1, None, None),
    "higdon": (_higdon_min, [[0.0, 20.0]], 0.1, None, None),
    "gramacy2d": (_gramacy2d_min, [[-2.0, 6.0]] * 2, 0.05, None, None),
    "ishigami": (_ishigami_min, [[-np.pi, np.pi]] * 3, 0.187, None, None),
}


def task_names():
    return sorted(_CATALOG)


def make_task(name, noise_std=None, embed_dim=None):
    """Build a registered task, optionally embedded in a higher dimension.

    Embedding appends dummy coordinates (same bounds as the last native
    one); the objective ignores them.
    """
    key = name.lower()
    if key not in _CATALOG:
        raise KeyError(f"unknown task {name!r}; available: {task_names()}")
    fn_min, bounds, default_noise, min_value, minimizer = _CATALOG[key]
    bounds = np.asarray(bounds, dtype=float)
    native_dim = bounds.shape[0]
    fn = _negated(fn_min)
    opt_val = None if min_value is None else -min_value
    opt_loc = None if minimizer is None else np.asarray(minimizer, dtype=float)
    if embed_dim is not None:
        if embed_dim < native_dim:
            raise ValueError("embed_dim must be at least the native dimension")
        extra = embed_dim - native_dim
        bounds = np.vstack([bounds, np.tile(bounds[-1], (extra, 1))])
        inner = fn
        fn = lambda X: inner(X[:, :native_dim])
        if opt_loc is not None:
            mid = 0.5 * (bounds[native_dim:, 0] + bounds[native_dim:, 1])
            opt_loc = np.concatenate([opt_loc, mid])
        name = f"{key}_in{embed_dim}d"
    else:
        name = key
    return Task(
        name=name,
        bounds=bounds,
        noise_std=default_noise if noise_std is None else float(noise_std),
        fn=fn,
        optimum_value=opt_val,
        optimum_location=opt_loc,
    )


DEFAULT_GP_SAMPLE_LOG10_LS = np.array([-1.0, -0.5, -0.5, 0.0, 0.0, 0.0, 1.5, 1.5])


@dataclass
class GPSampleTask(Task):
    """A function drawn from a GP prior with known hyperparameters."""

    true_theta: gp.HyperParams | None = None
    seed: int | None = None


def gp_sample_task(
    seed,
    dim=8,
    log10_lengthscales=None,
    outputscale_var=1.0,
    noise_var=0.1,
    kernel="matern52",
    num_features=2048,
):
    """Draw a random objective from a GP prior on the unit cube.

    The default hyperparameters give an 8-dimensional function with a
    mix of short, moderate and essentially inactive lengthscales.  The
    true hyperparameters are stored on the task, and the optimum is
    located numerically from the (exact) function draw.
    """
    if log10_lengthscales is None:
        if dim == len(DEFAULT_GP_SAMPLE_LOG10_LS):
            log10_ls = DEFAULT_GP_SAMPLE_LOG10_LS
        else:
            log10_ls = np.zeros(dim)
    else:
        log10_ls = np.asarray(log10_lengthscales, dtype=float)
        if log10_ls.shape[0] != dim:
            raise ValueError("log10_lengthscales must have length dim")
    theta = gp.HyperParams(
        lengthscales=10.0**log10_ls,
        outputscale_var=outputscale_var,
        noise_var=noise_var,
        mean_const=0.0,
    )
    prior_model = gp.fit(gp.empty_dataset(dim), theta, kernel)
    path = draw_pathwise_sample(
        prior_model, num_features=num_features, seed=rng_from(seed, 0)
    )
    opt = maximize_sample(
        path, num_starts=4096, num_top=16, num_steps=200, seed=rng_from(seed, 1)
    )
    task = GPSampleTask(
        name=f"gp_sample_{dim}d_s{seed}",
        bounds=np.tile([0.0, 1.0], (dim, 1)),
        noise_std=float(np.sqrt(noise_var)),
        fn=lambda X: path(X),
        optimum_value=opt.f,
        optimum_location=opt.x,
        true_theta=theta,
        seed=int(seed),
    )
    return task


def locate_posterior_maximum(ens, seed=1789):
    """Argmax of the ensemble's mixture posterior mean on the unit cube."""

    def mean_fn(X):
        return marginal_predict(ens, X, include_noise=False).means.mean(axis=0)

    x_best, _ = optimize_acquisition(mean_fn, ens.dim, seed=seed)
    return x_best


def inference_regret(ens, task, seed=1789):
    """Gap between the optimum and the objective at the believed optimum.

    The believed optimum is the argmax of the mixture posterior mean,
    located by the same candidate-plus-refine scheme as acquisition
    optimization.  Requires a task with a known optimum.
    """
    if task.optimum_value is None:
        raise ValueError(f"task {task.name!r} has no known optimum")
    x_hat = locate_posterior_maximum(ens, seed=seed)
    value = float(task.noiseless(x_hat[None, :])[0])
    return max(task.optimum_value - value, 0.0)


def simple_regret(task, X01_observed):
    """Gap between the optimum and the best observed point (noiseless)."""
    if task.optimum_value is None:
        raise ValueError(f"task {task.name!r} has no known optimum")
    vals = task.noiseless(X01_observed)
    return max(task.optimum_value - float(np.max(vals)), 0.0)


def prediction_metrics(ens, task, X01_val):
    """Negative mean log likelihood and RMSE on validation points.

    The noiseless objective is scored under the noise-inclusive
    marginal predictive mixture, reported on the task's original output
    scale (the ensemble carries its standardization).
    """
    X01_val = as_matrix(X01_val, "X01_val")
    f_true = task.noiseless(X01_val)
    mix = marginal_predict(ens, X01_val, include_noise=True)
    means = mix.means * ens.y_scale + ens.y_shift
    vars_ = mix.vars * ens.y_scale**2
    comp_logpdf = gaussian_logpdf(f_true[None, :], means, vars_)
    log_density = logsumexp(comp_logpdf, axis=0) - np.log(means.shape[0])
    neg_mll = float(-np.mean(log_density))
    rmse = float(np.sqrt(np.mean((means.mean(axis=0) - f_true) ** 2)))
    return {"neg_mll": neg_mll, "rmse": rmse}
