"""Bayesian active learning and self-correcting Bayesian optimization.

Fully Bayesian GP surrogates (hyperparameters sampled with NUTS) power
disagreement-based active learning scores and an optimum-conditioned
self-correcting acquisition, with closed-form and Monte Carlo
statistical distances, pathwise optimum sampling, benchmark tasks and a
reproducible experiment harness.
"""

__version__ = "0.1.0"

from .acquisition import (
    ACQUISITIONS,
    AcquisitionSpec,
    ModelEnsemble,
    acquisition_value,
    bald_value,
    balm_value,
    bqbc_value,
    build_conditionals,
    marginal_predict,
    nei_value,
    optimize_acquisition,
    qbmgp_value,
    sal_value,
    scorebo_iteration,
    scorebo_value,
)
from .benchmarks import (
    GPSampleTask,
    Task,
    gp_sample_task,
    inference_regret,
    make_task,
    prediction_metrics,
    simple_regret,
    task_names,
)
from .distances import (
    DistanceSpec,
    MixturePredict,
    distance,
    gaussian_hellinger,
    gaussian_kl,
    gaussian_wasserstein2,
    mc_hellinger,
    mc_wasserstein2,
    mixture_quantile,
    moment_match,
)
from .estimator import FullyBayesianGPRegressor
from .gp import (
    Dataset,
    GaussianPredict,
    GPPosterior,
    HyperParams,
    empty_dataset,
    fantasize,
    fit,
    kernel_matrix,
    log_marginal_likelihood,
    truncated_moments,
)
from .harness import ExperimentConfig, emit_plots, run_experiment, run_from_manifest
from .hyper import (
    HyperSampleSet,
    MCMCConfig,
    log_posterior_density,
    map_estimate,
    nuts_sample,
)
from .nuts import nuts_chain
from .pathwise import (
    ConditionedModel,
    OptimumSample,
    PathSample,
    condition_on_optimum,
    draw_pathwise_sample,
    maximize_sample,
)
from .priors import PriorFamily, make_prior

__all__ = [
    "ACQUISITIONS",
    "AcquisitionSpec",
    "ConditionedModel",
    "Dataset",
    "DistanceSpec",
    "ExperimentConfig",
    "FullyBayesianGPRegressor",
    "GPPosterior",
    "GPSampleTask",
    "GaussianPredict",
    "HyperParams",
    "HyperSampleSet",
    "MCMCConfig",
    "MixturePredict",
    "ModelEnsemble",
    "OptimumSample",
    "PathSample",
    "PriorFamily",
    "Task",
    "acquisition_value",
    "bald_value",
    "balm_value",
    "bqbc_value",
    "build_conditionals",
    "condition_on_optimum",
    "distance",
    "draw_pathwise_sample",
    "emit_plots",
    "empty_dataset",
    "fantasize",
    "fit",
    "gaussian_hellinger",
    "gaussian_kl",
    "gaussian_wasserstein2",
    "gp_sample_task",
    "inference_regret",
    "kernel_matrix",
    "log_marginal_likelihood",
    "log_posterior_density",
    "make_prior",
    "make_task",
    "map_estimate",
    "marginal_predict",
    "maximize_sample",
    "mc_hellinger",
    "mc_wasserstein2",
    "mixture_quantile",
    "moment_match",
    "nei_value",
    "nuts_chain",
    "nuts_sample",
    "optimize_acquisition",
    "prediction_metrics",
    "qbmgp_value",
    "run_experiment",
    "run_from_manifest",
    "sal_value",
    "scorebo_iteration",
    "scorebo_value",
    "simple_regret",
    "task_names",
    "truncated_moments",
]
