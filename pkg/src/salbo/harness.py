"""Experiment harness: configs, sequential-design loops, CSV/plot output.

A run is addressed by (config, seed).  Every stochastic sub-operation
draws from a named sub-stream of the run seed, so re-running a manifest
reproduces the CSV files byte for byte; wall-clock timings live in the
manifest only.
"""

from __future__ import annotations

import json
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import qmc

from . import __version__
from .acquisition import (
    AcquisitionSpec,
    ModelEnsemble,
    acquisition_value,
    build_conditionals,
    optimize_acquisition,
)
from .benchmarks import (
    gp_sample_task,
    inference_regret,
    make_task,
    prediction_metrics,
    simple_regret,
)
from .distances import DistanceSpec
from .gp import Dataset
from .hyper import MCMCConfig, map_estimate, nuts_sample
from .priors import make_prior
from .utils import rng_from

# sub-stream purposes for seed derivation
_INIT, _OBSERVE, _MCMC, _COND, _ACQOPT, _VALPTS, _RANDSEL, _TASK = range(8)

AL_KINDS = ("sal", "bald", "balm", "bqbc", "qbmgp")
BO_KINDS = ("scorebo", "nei")


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce an experiment.

    task : dict with "name" plus optional "noise_std", "embed_dim", and,
        for "gp_sample", "seed"/"dim" (a null seed means per-run seed).
    acquisition : AcquisitionSpec
    mcmc : MCMCConfig
    mode : {"auto", "al", "bo"}; auto infers from the acquisition.
    budget : query count; defaults to 25 * (dim + 3).
    init_points : defaults to max(6, 2 * dim).
    """

    task: dict
    acquisition: AcquisitionSpec = field(default_factory=AcquisitionSpec)
    mcmc: MCMCConfig = field(default_factory=MCMCConfig)
    prior: str = "lognormal_wide"
    kernel: str = "matern52"
    mode: str = "auto"
    seeds: tuple = (0,)
    budget: int | None = None
    init_points: int | None = None
    num_validation: int = 1000
    inference: str = "nuts"
    map_restarts: int = 10
    workers: int = 1
    label: str | None = None

    def __post_init__(self):
        if isinstance(self.task, str):
            self.task = {"name": self.task}
        if isinstance(self.acquisition, dict):
            acq = dict(self.acquisition)
            if "distance" in acq and isinstance(acq["distance"], dict):
                acq["distance"] = DistanceSpec(**acq["distance"])
            self.acquisition = AcquisitionSpec(**acq)
        if isinstance(self.mcmc, dict):
            self.mcmc = MCMCConfig(**self.mcmc)
        self.seeds = tuple(int(s) for s in self.seeds)
        if self.mode not in ("auto", "al", "bo"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.inference not in ("nuts", "map"):
            raise ValueError(f"unknown inference {self.inference!r}")

    @property
    def resolved_mode(self):
        if self.mode != "auto":
            return self.mode
        if self.acquisition.kind in AL_KINDS:
            return "al"
        return "bo"

    @property
    def run_label(self):
        if self.label:
            return self.label
        spec = self.acquisition
        if spec.kind in ("sal", "scorebo"):
            est = "mm" if spec.distance.estimator == "moment_match" else "mc"
            return f"{spec.kind}-{spec.distance.metric}-{est}"
        return spec.kind

    def to_dict(self):
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _build_task(config, run_seed):
    spec = dict(config.task)
    name = spec.pop("name")
    if name.lower() == "gp_sample":
        task_seed = spec.pop("seed", None)
        if task_seed is None:
            task_seed = int(
                np.random.SeedSequence(
                    entropy=run_seed, spawn_key=(_TASK,)
                ).generate_state(1)[0]
            )
        return gp_sample_task(task_seed, **spec)
    return make_task(name, **spec)


def _standardize(ys):
    mu = float(np.mean(ys))
    sd = float(np.std(ys))
    if not np.isfinite(sd) or sd < 1e-12:
        sd = 1.0
    return mu, sd


def _fit_ensemble(config, task, X01, ys, seed, iteration):
    mu, sd = _standardize(ys)
    dataset = Dataset(X01, (ys - mu) / sd)
    prior = make_prior(config.prior)
    if config.inference == "map":
        theta = map_estimate(
            dataset,
            prior,
            restarts=config.map_restarts,
            seed=rng_from(seed, _MCMC, iteration),
            kind=config.kernel,
        )
        thetas = [theta]
    else:
        samples = nuts_sample(
            dataset,
            prior,
            config.mcmc,
            seed=rng_from(seed, _MCMC, iteration),
            kind=config.kernel,
        )
        thetas = samples.thetas
    return ModelEnsemble.from_thetas(
        dataset, thetas, config.kernel, y_shift=mu, y_scale=sd
    )


def _hp_medians(ens):
    ls = np.median([p.theta.lengthscales for p in ens.posteriors], axis=0)
    out = {f"hp_median_lengthscale_{i}": v for i, v in enumerate(ls)}
    out["hp_median_outputscale_var"] = float(
        np.median([p.theta.outputscale_var for p in ens.posteriors])
    )
    out["hp_median_noise_var"] = float(
        np.median([p.theta.noise_var for p in ens.posteriors])
    )
    out["hp_median_mean_const"] = float(
        np.median([p.theta.mean_const for p in ens.posteriors])
    )
    return out


def _metrics_row(config, task, ens, X01_obs, X01_val, track_regret):
    row = {}
    if track_regret:
        row["inference_regret"] = inference_regret(ens, task)
        row["simple_regret"] = simple_regret(task, X01_obs)
    row.update(prediction_metrics(ens, task, X01_val))
    row.update(_hp_medians(ens))
    return row


def _select_point(config, task, ens, seed, iteration):
    spec = config.acquisition
    if spec.kind == "random":
        return rng_from(seed, _RANDSEL, iteration).uniform(size=task.dim)
    conditionals = None
    if spec.kind == "scorebo":
        conditionals, _ = build_conditionals(
            ens,
            num_optima=spec.num_optima,
            num_features=spec.num_features,
            conditioning=spec.conditioning,
            seed=int(
                np.random.SeedSequence(
                    entropy=seed, spawn_key=(_COND, iteration)
                ).generate_state(1)[0]
            ),
        )
    acq_seed = int(
        np.random.SeedSequence(entropy=seed, spawn_key=(_ACQOPT, iteration, 1))
        .generate_state(1)[0]
    )

    def acq(X):
        return acquisition_value(ens, X, spec, conditionals=conditionals, seed=acq_seed)

    x_next, _ = optimize_acquisition(
        acq, task.dim, seed=rng_from(seed, _ACQOPT, iteration, 0)
    )
    return x_next


def _format_value(v):
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def run_seed(config, seed, out_dir):
    """Run one (config, seed) pair and write its CSV.

    Returns the per-iteration timing list (seconds).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    task = _build_task(config, seed)
    dim = task.dim
    init_n = config.init_points or max(6, 2 * dim)
    budget = config.budget or 25 * (dim + 3)
    mode = config.resolved_mode
    track_regret = mode == "bo" and task.optimum_value is not None

    sampler = qmc.Halton(d=dim, scramble=True, seed=rng_from(seed, _INIT))
    X01 = sampler.random(init_n)
    ys = task.observe(X01, rng_from(seed, _OBSERVE, 0))
    X01_val = qmc.Halton(d=dim, scramble=True, seed=rng_from(seed, _VALPTS)).random(
        config.num_validation
    )

    timings = []
    rows = []
    t0 = time.perf_counter()
    ens = _fit_ensemble(config, task, X01, ys, seed, 0)
    metrics = _metrics_row(config, task, ens, X01, X01_val, track_regret)
    timings.append(time.perf_counter() - t0)
    for i in range(init_n):
        row = {"seed": seed, "iteration": 0}
        row.update({f"x_{d}": task.to_domain(X01[i][None, :])[0, d] for d in range(dim)})
        row["y"] = ys[i]
        row.update(metrics)
        rows.append(row)

    for t in range(1, budget + 1):
        t0 = time.perf_counter()
        x_next = _select_point(config, task, ens, seed, t)
        y_next = task.observe(x_next[None, :], rng_from(seed, _OBSERVE, t))[0]
        X01 = np.vstack([X01, x_next[None, :]])
        ys = np.append(ys, y_next)
        ens = _fit_ensemble(config, task, X01, ys, seed, t)
        metrics = _metrics_row(config, task, ens, X01, X01_val, track_regret)
        row = {"seed": seed, "iteration": t}
        row.update(
            {f"x_{d}": task.to_domain(x_next[None, :])[0, d] for d in range(dim)}
        )
        row["y"] = y_next
        row.update(metrics)
        rows.append(row)
        timings.append(time.perf_counter() - t0)

    csv_path = out_dir / f"seed_{seed}.csv"
    columns = list(rows[0].keys())
    with open(csv_path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_format_value(row[c]) for c in columns) + "\n")
    return timings


def _run_seed_entry(config_dict, seed, out_dir):
    config = ExperimentConfig.from_dict(config_dict)
    return run_seed(config, seed, out_dir)


def run_experiment(config, out_dir, seeds=None):
    """Run all seeds of a config, write CSVs and a manifest.

    Seeds run in parallel worker processes when `config.workers` > 1.
    Per-seed failures are recorded in the manifest instead of aborting
    the others.

    Returns
    -------
    dict manifest (also written to out_dir/manifest.json).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = list(config.seeds if seeds is None else seeds)
    seed_info = {}
    if config.workers > 1 and len(seeds) > 1:
        futures = {}
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for s in seeds:
                futures[s] = pool.submit(_run_seed_entry, config.to_dict(), s, out_dir)
            for s, fut in futures.items():
                try:
                    timings = fut.result()
                    seed_info[s] = {
                        "status": "ok",
                        "csv": f"seed_{s}.csv",
                        "wall_time_s": float(sum(timings)),
                        "iteration_times_s": [round(x, 6) for x in timings],
                    }
                except Exception as exc:
                    seed_info[s] = {
                        "status": "failed",
                        "error": f"{type(exc).__name__}: {exc}",
                    }
    else:
        for s in seeds:
            try:
                timings = run_seed(config, s, out_dir)
                seed_info[s] = {
                    "status": "ok",
                    "csv": f"seed_{s}.csv",
                    "wall_time_s": float(sum(timings)),
                    "iteration_times_s": [round(x, 6) for x in timings],
                }
            except Exception as exc:
                traceback.print_exc()
                seed_info[s] = {
                    "status": "failed",
                    "error": f"{type(exc).__name__}: {exc}",
                }
    manifest = {
        "package_version": __version__,
        "label": config.run_label,
        "config": config.to_dict(),
        "seeds": {str(s): seed_info[s] for s in seeds},
        "created_unix": time.time(),
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest


def run_from_manifest(manifest_path, out_dir=None):
    """Re-run the experiment recorded in a manifest."""
    manifest_path = Path(manifest_path)
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    config = ExperimentConfig.from_dict(manifest["config"])
    if out_dir is None:
        out_dir = manifest_path.parent
    return run_experiment(config, out_dir)


def load_results(result_dir):
    """Collect (label, per-seed metric tables) from run directories.

    `result_dir` either holds manifest.json itself or run subdirectories
    that do.
    """
    import csv as csv_mod

    result_dir = Path(result_dir)
    run_dirs = []
    if (result_dir / "manifest.json").exists():
        run_dirs = [result_dir]
    else:
        run_dirs = sorted(
            p.parent for p in result_dir.glob("*/manifest.json")
        )
    out = []
    for rd in run_dirs:
        with open(rd / "manifest.json") as fh:
            manifest = json.load(fh)
        tables = {}
        for s, info in manifest["seeds"].items():
            if info.get("status") != "ok":
                continue
            with open(rd / info["csv"]) as fh:
                reader = csv_mod.DictReader(fh)
                rows = list(reader)
            tables[int(s)] = rows
        out.append((manifest.get("label", rd.name), tables))
    return out


def emit_plots(result_dir, metric, out_path=None):
    """Plot mean and one standard error of a metric across seeds.

    One curve per run directory; regret metrics get a log-scale axis.
    Writes an SVG next to the results and returns its path.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    results = load_results(result_dir)
    if not results:
        raise FileNotFoundError(f"no run manifests under {result_dir}")
    fig, ax = plt.subplots(figsize=(7, 4.5))
    plotted = 0
    for label, tables in results:
        curves = []
        for s, rows in tables.items():
            pairs = [
                (int(r["iteration"]), float(r[metric]))
                for r in rows
                if metric in r and r[metric] != ""
            ]
            if not pairs:
                continue
            by_iter = {}
            for it, v in pairs:
                by_iter[it] = v
            curves.append(by_iter)
        if not curves:
            continue
        its = sorted(set().union(*[set(c) for c in curves]))
        common = [it for it in its if all(it in c for c in curves)]
        data = np.array([[c[it] for it in common] for c in curves])
        mean = data.mean(axis=0)
        se = data.std(axis=0, ddof=1) / np.sqrt(data.shape[0]) if data.shape[0] > 1 else 0 * mean
        ax.plot(common, mean, label=label)
        ax.fill_between(common, mean - se, mean + se, alpha=0.2)
        plotted += 1
    if plotted == 0:
        raise ValueError(f"metric {metric!r} not found in any run")
    if "regret" in metric:
        ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel(metric)
    ax.legend()
    fig.tight_layout()
    out_path = Path(out_path or Path(result_dir) / f"{metric}.svg")
    fig.savefig(out_path, format="svg")
    plt.close(fig)
    return out_path


def al_suite(noise_overrides=None):
    """Active-learning benchmark presets: task names with noise levels."""
    tasks = {
        "gramacy1d": 0.1,
        "higdon": 0.1,
        "gramacy2d": 0.05,
        "branin": 11.32,
        "ishigami": 0.187,
        "hartmann6": 0.0192,
    }
    if noise_overrides:
        tasks.update(noise_overrides)
    return tasks


def bo_suite(noise_overrides=None):
    """Optimization benchmark presets: task names with noise levels."""
    tasks = {
        "branin": 0.5,
        "rosenbrock2": 2.5,
        "hartmann3": 0.5,
        "rosenbrock4": 2.5,
        "hartmann4": 0.5,
        "hartmann6": 0.5,
    }
    if noise_overrides:
        tasks.update(noise_overrides)
    return tasks


def suite_configs(suite, seeds=(0, 1, 2, 3, 4), budget=None, mcmc=None, workers=1):
    """Materialize preset experiment configs for a benchmark suite."""
    mcmc = mcmc or MCMCConfig()
    configs = []
    if suite == "al":
        acqs = [
            AcquisitionSpec(kind="sal", distance=DistanceSpec("hellinger")),
            AcquisitionSpec(kind="sal", distance=DistanceSpec("wasserstein2")),
            AcquisitionSpec(kind="bald"),
            AcquisitionSpec(kind="bqbc"),
            AcquisitionSpec(kind="qbmgp"),
            AcquisitionSpec(kind="random"),
        ]
        tasks = al_suite()
        mode = "al"
    elif suite == "bo":
        acqs = [
            AcquisitionSpec(kind="scorebo", distance=DistanceSpec("hellinger")),
            AcquisitionSpec(kind="nei"),
            AcquisitionSpec(kind="random"),
        ]
        tasks = bo_suite()
        mode = "bo"
    else:
        raise ValueError(f"unknown suite {suite!r}")
    for task_name, noise in tasks.items():
        for acq in acqs:
            configs.append(
                ExperimentConfig(
                    task={"name": task_name, "noise_std": noise},
                    acquisition=acq,
                    mcmc=mcmc,
                    mode=mode,
                    seeds=seeds,
                    budget=budget,
                    workers=workers,
                )
            )
    return configs
