"""Acquisition functions over fully Bayesian GP ensembles.

An ensemble holds one exact GP posterior per hyperparameter draw; the
marginal predictive at any point is an equal-weight Gaussian mixture.
Disagreement-based active learning scores (statistical-distance,
mutual-information, query-by-committee variants) and the
optimum-conditioned self-correcting score share this representation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.stats import norm, qmc

from . import gp
from .distances import DistanceSpec, MixturePredict, distance, moment_match
from .gp import GaussianPredict, truncated_moments
from .pathwise import (
    CONDITIONING,
    condition_on_optimum,
    draw_pathwise_sample,
    maximize_sample,
)
from .utils import as_matrix, gaussian_entropy, rng_from

ACQUISITIONS = ("sal", "scorebo", "bald", "balm", "bqbc", "qbmgp", "nei", "random")


@dataclass
class ModelEnsemble:
    """GP posteriors for M hyperparameter sets sharing one dataset.

    `y_shift` and `y_scale` record the output standardization applied
    before fitting, so metrics can report on the original scale.
    """

    dataset: gp.Dataset
    posteriors: list
    y_shift: float = 0.0
    y_scale: float = 1.0

    @classmethod
    def from_samples(cls, dataset, sample_set, kind="matern52", y_shift=0.0, y_scale=1.0):
        posteriors = [gp.fit(dataset, th, kind) for th in sample_set.thetas]
        return cls(dataset, posteriors, y_shift, y_scale)

    @classmethod
    def from_thetas(cls, dataset, thetas, kind="matern52", y_shift=0.0, y_scale=1.0):
        posteriors = [gp.fit(dataset, th, kind) for th in thetas]
        return cls(dataset, posteriors, y_shift, y_scale)

    def __len__(self):
        return len(self.posteriors)

    @property
    def dim(self):
        return self.dataset.dim


def marginal_predict(ens, X, include_noise=True):
    """Marginal predictive mixture over the ensemble at a batch of points."""
    if not len(ens):
        raise ValueError("ensemble has no members")
    X = as_matrix(X, "X")
    means = np.empty((len(ens), X.shape[0]))
    vars_ = np.empty_like(means)
    for m, post in enumerate(ens.posteriors):
        pred = post.predict(X, include_noise=include_noise)
        means[m] = pred.mean
        vars_[m] = pred.var
    return MixturePredict(means, vars_)


def balm_value(ens, X):
    """Variance of the moment-matched marginal predictive."""
    return moment_match(marginal_predict(ens, X)).var


def bqbc_value(ens, X):
    """Variance of the per-model predictive means across the ensemble."""
    return marginal_predict(ens, X).means.var(axis=0)


def qbmgp_value(ens, X):
    """Committee disagreement plus marginal variance."""
    mix = marginal_predict(ens, X)
    return moment_match(mix).var + mix.means.var(axis=0)


def bald_value(ens, X):
    """Mutual information between the observation and the hyperparameters.

    Entropy of the moment-matched marginal minus the average entropy of
    the per-model predictive distributions (all noise-inclusive).
    """
    mix = marginal_predict(ens, X)
    mm = moment_match(mix)
    return gaussian_entropy(mm.var) - gaussian_entropy(mix.vars).mean(axis=0)


def sal_value(ens, X, dist_spec=None, seed=0):
    """Average statistical distance from each member to the marginal."""
    dist_spec = dist_spec or DistanceSpec()
    X = as_matrix(X, "X")
    mix = marginal_predict(ens, X)
    total = np.zeros(X.shape[0])
    for m in range(len(ens)):
        comp = GaussianPredict(mix.means[m], mix.vars[m])
        total = total + distance(mix, comp, dist_spec, seed=_subseed(seed, m))
    return total / len(ens)


def _subseed(seed, *path):
    if isinstance(seed, np.random.Generator):
        return seed
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(path))
    return int(ss.generate_state(1)[0])


def nei_value(ens, X):
    """Expected improvement over each model's own latent incumbent.

    The incumbent of a member is its maximum latent posterior mean over
    the observed inputs, which keeps the baseline noise-free; the
    per-model improvements are averaged over the ensemble.
    """
    if ens.dataset.n == 0:
        raise ValueError("expected improvement needs at least one observation")
    X = as_matrix(X, "X")
    total = np.zeros(X.shape[0])
    for post in ens.posteriors:
        inc = float(np.max(post.predict(ens.dataset.X).mean))
        pred = post.predict(X, include_noise=False)
        sd = np.sqrt(np.maximum(pred.var, 0.0))
        diff = pred.mean - inc
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(sd > 0, diff / np.maximum(sd, 1e-300), 0.0)
        ei = np.where(
            sd > 0,
            diff * norm.cdf(z) + sd * norm.pdf(z),
            np.maximum(diff, 0.0),
        )
        total += ei
    return total / len(ens)


@dataclass
class ParentConditionals:
    """Optimum-conditioned models sharing one parent posterior.

    Caches the rank-one extension of each conditional so a batch
    predict costs one triangular solve on the parent plus O(n) per
    conditional, instead of a full solve per conditional.
    """

    parent: gp.GPPosterior
    models: list
    _fast: bool = field(init=False)
    _b: np.ndarray | None = field(init=False, default=None)
    _d: np.ndarray | None = field(init=False, default=None)
    _a_head: np.ndarray | None = field(init=False, default=None)
    _a_last: np.ndarray | None = field(init=False, default=None)
    _x_stars: np.ndarray | None = field(init=False, default=None)
    _f_stars: list = field(init=False, default_factory=list)

    def __post_init__(self):
        n = self.parent.n
        self._f_stars = [m.f_star for m in self.models]
        fantasy = [m.base is not self.parent for m in self.models]
        self._fast = n > 0 and all(
            (not f) or (m.base.n == n + 1 and not m.base.refit_fallback)
            for f, m in zip(fantasy, self.models)
        )
        if not self._fast:
            return
        ext = [m for m, f in zip(self.models, fantasy) if f]
        if ext:
            self._b = np.stack([m.base.chol[n, :n] for m in ext], axis=1)
            self._d = np.array([m.base.chol[n, n] for m in ext])
            self._a_head = np.stack([m.base.alpha[:n] for m in ext], axis=1)
            self._a_last = np.array([m.base.alpha[n] for m in ext])
            self._x_stars = np.vstack([m.base.X_all[n] for m in ext])
        self._ext_index = [i for i, f in enumerate(fantasy) if f]
        self._plain_index = [i for i, f in enumerate(fantasy) if not f]

    def predict(self, X, include_noise=False):
        """Means and variances of every conditional, shape (N, b)."""
        X = as_matrix(X, "X")
        N, B = len(self.models), X.shape[0]
        if not self._fast:
            means = np.empty((N, B))
            vars_ = np.empty((N, B))
            for j, m in enumerate(self.models):
                pred = m.predict(X, include_noise=include_noise)
                means[j] = pred.mean
                vars_[j] = pred.var
            return means, vars_
        parent = self.parent
        th = parent.theta
        Ks = gp.kernel_matrix(parent.X_all, X, th, parent.kind)
        V = solve_triangular(parent.chol, Ks, lower=True)
        base_var = np.maximum(th.outputscale_var - np.sum(V * V, axis=0), 0.0)
        means = np.empty((N, B))
        vars_ = np.empty((N, B))
        if self._plain_index:
            mean_plain = th.mean_const + Ks.T @ parent.alpha
            for j in self._plain_index:
                means[j] = mean_plain
                vars_[j] = base_var
        if self._ext_index:
            Kstar = gp.kernel_matrix(self._x_stars, X, th, parent.kind)
            v_last = (Kstar - self._b.T @ V) / self._d[:, None]
            mean_ext = (
                th.mean_const
                + self._a_head.T @ Ks
                + self._a_last[:, None] * Kstar
            )
            var_ext = np.maximum(base_var[None, :] - v_last * v_last, 0.0)
            for k, j in enumerate(self._ext_index):
                means[j] = mean_ext[k]
                vars_[j] = var_ext[k]
        for j, f_star in enumerate(self._f_stars):
            if f_star is not None:
                t = truncated_moments(GaussianPredict(means[j], vars_[j]), f_star)
                means[j], vars_[j] = t.mean, t.var
        if include_noise:
            vars_ = vars_ + th.noise_var
        return means, vars_


@dataclass
class ConditionalSet:
    """All optimum-conditioned models of an ensemble, grouped by parent."""

    groups: list

    @property
    def models(self):
        return [m for g in self.groups for m in g.models]

    def __len__(self):
        return sum(len(g.models) for g in self.groups)


def build_conditionals(
    ens,
    num_optima=8,
    num_features=8192,
    conditioning="both",
    seed=0,
    num_starts=128,
    num_top=4,
    num_steps=30,
):
    """Sample optima per ensemble member and condition on each.

    For member m, `num_optima` pathwise function draws are maximized
    over the unit cube; each optimum conditions a copy of that member.
    Sub-seeds are derived per (member, draw), so changing the counts
    never perturbs other draws.  The per-path search settings default
    lighter than `maximize_sample`'s own: sampled optima only steer the
    conditioning, so modest location error is acceptable and the search
    runs num_members * num_optima times per call.

    Returns
    -------
    conditionals : ConditionalSet
    optima : list of list of OptimumSample, indexed [member][draw]
    """
    if conditioning not in CONDITIONING:
        raise ValueError(f"unknown conditioning {conditioning!r}")
    groups = []
    optima = []
    for m, post in enumerate(ens.posteriors):
        models_m = []
        optima_m = []
        for j in range(num_optima):
            path = draw_pathwise_sample(
                post, num_features=num_features, seed=_subseed(seed, 0, m, j)
            )
            opt = maximize_sample(
                path,
                num_starts=num_starts,
                num_top=num_top,
                num_steps=num_steps,
                seed=_subseed(seed, 1, m, j),
            )
            models_m.append(condition_on_optimum(post, opt, conditioning))
            optima_m.append(opt)
        groups.append(ParentConditionals(parent=post, models=models_m))
        optima.append(optima_m)
    return ConditionalSet(groups), optima


def scorebo_value(ens, conditionals, X, dist_spec=None, seed=0):
    """Self-correcting score: marginal against optimum-conditioned models.

    Averages the statistical distance between the marginal predictive
    mixture and each conditional predictive over all (member, optimum)
    pairs; all distributions are noise-inclusive.
    """
    dist_spec = dist_spec or DistanceSpec()
    X = as_matrix(X, "X")
    mix = marginal_predict(ens, X)
    total = np.zeros(X.shape[0])
    count = 0
    if isinstance(conditionals, ConditionalSet):
        for g_idx, group in enumerate(conditionals.groups):
            means, vars_ = group.predict(X, include_noise=True)
            for j in range(means.shape[0]):
                q = GaussianPredict(means[j], vars_[j])
                total = total + distance(
                    mix, q, dist_spec, seed=_subseed(seed, g_idx, j)
                )
                count += 1
    else:
        for j, model in enumerate(conditionals):
            pred = model.predict(X, include_noise=True)
            total = total + distance(mix, pred, dist_spec, seed=_subseed(seed, 0, j))
            count += 1
    if count == 0:
        raise ValueError("no conditional models supplied")
    return total / count


def optimize_acquisition(acq_fn, dim, seed=0, num_candidates=512, num_refine=4):
    """Maximize an acquisition over the unit cube.

    Scores quasi-random candidates in one batch, then refines the best
    few with coordinate-wise pattern search (batched evaluations).  The
    returned value is never below any candidate's value.

    Returns
    -------
    x_best : ndarray, shape (dim,)
    value : float
    """
    rng = rng_from(seed) if not isinstance(seed, np.random.Generator) else seed
    sampler = qmc.Sobol(d=dim, scramble=True, seed=rng)
    cand = sampler.random(num_candidates)
    vals = np.asarray(acq_fn(cand), dtype=float)
    order = np.argsort(vals)[::-1][: max(num_refine, 1)]
    pts = cand[order].copy()
    best = vals[order].copy()
    steps = np.full(pts.shape[0], 0.1)
    for _ in range(60):
        active = steps >= 2.5e-4
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        neighbors = []
        for i in idx:
            for d in range(dim):
                for sign in (-1.0, 1.0):
                    p = pts[i].copy()
                    p[d] = min(max(p[d] + sign * steps[i], 0.0), 1.0)
                    neighbors.append(p)
        neighbors = np.asarray(neighbors)
        nvals = np.asarray(acq_fn(neighbors), dtype=float)
        per = 2 * dim
        for k, i in enumerate(idx):
            block = nvals[k * per : (k + 1) * per]
            jbest = int(np.argmax(block))
            if block[jbest] > best[i]:
                best[i] = block[jbest]
                pts[i] = neighbors[k * per + jbest]
            else:
                steps[i] *= 0.5
    k = int(np.argmax(best))
    return pts[k], float(best[k])


@dataclass(frozen=True)
class AcquisitionSpec:
    """Which score to optimize and how to configure it.

    kind : one of ACQUISITIONS (case-insensitive on input)
    distance : DistanceSpec, used by the statistical-distance scores
    num_optima : optima sampled per ensemble member
    num_features : random features per pathwise draw
    conditioning : {"both", "location", "value"}
    """

    kind: str = "scorebo"
    distance: DistanceSpec = field(default_factory=DistanceSpec)
    num_optima: int = 8
    num_features: int = 8192
    conditioning: str = "both"

    def __post_init__(self):
        object.__setattr__(self, "kind", str(self.kind).lower())
        if self.kind not in ACQUISITIONS:
            raise ValueError(f"unknown acquisition {self.kind!r}")
        if self.conditioning not in CONDITIONING:
            raise ValueError(f"unknown conditioning {self.conditioning!r}")
        if self.num_optima < 1 or self.num_features < 1:
            raise ValueError("counts must be positive")


def acquisition_value(ens, X, spec, conditionals=None, seed=0):
    """Evaluate the configured acquisition at a batch of points."""
    kind = spec.kind
    if kind == "sal":
        return sal_value(ens, X, spec.distance, seed=seed)
    if kind == "scorebo":
        if conditionals is None:
            raise ValueError("scorebo needs conditional models")
        return scorebo_value(ens, conditionals, X, spec.distance, seed=seed)
    if kind == "bald":
        return bald_value(ens, X)
    if kind == "balm":
        return balm_value(ens, X)
    if kind == "bqbc":
        return bqbc_value(ens, X)
    if kind == "qbmgp":
        return qbmgp_value(ens, X)
    if kind == "nei":
        return nei_value(ens, X)
    raise ValueError(f"acquisition {kind!r} has no pointwise value")


def scorebo_iteration(
    dataset,
    prior,
    mcmc_config=None,
    spec=None,
    seed=0,
    kind="matern52",
):
    """One full self-correcting step: sample, condition, optimize.

    Draws hyperparameter sets with NUTS, fits the ensemble, samples and
    conditions on optima, then maximizes the score over the unit cube.

    Returns
    -------
    x_next : ndarray, shape (dim,)
    ens : ModelEnsemble
    optima : list of list of OptimumSample
    """
    from .hyper import MCMCConfig, nuts_sample

    spec = spec or AcquisitionSpec()
    mcmc_config = mcmc_config or MCMCConfig()
    samples = nuts_sample(dataset, prior, mcmc_config, seed=_subseed(seed, 0), kind=kind)
    ens = ModelEnsemble.from_samples(dataset, samples, kind)
    conditionals, optima = build_conditionals(
        ens,
        num_optima=spec.num_optima,
        num_features=spec.num_features,
        conditioning=spec.conditioning,
        seed=_subseed(seed, 1),
    )

    def acq(X):
        return scorebo_value(ens, conditionals, X, spec.distance, seed=_subseed(seed, 2))

    x_next, _ = optimize_acquisition(acq, dataset.dim, seed=_subseed(seed, 3))
    return x_next, ens, optima
