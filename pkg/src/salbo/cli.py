"""Command line entry points: run experiments, benchmark suites, plots."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import (
    ExperimentConfig,
    emit_plots,
    run_experiment,
    run_from_manifest,
    suite_configs,
)
from .hyper import MCMCConfig


def _add_run(sub):
    p = sub.add_parser("run", help="run one experiment from a JSON config")
    p.add_argument("--config", required=True, help="path to a JSON config file")
    p.add_argument("--seed", type=int, default=None, help="run only this seed")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--workers", type=int, default=None, help="parallel seed workers")


def _add_bench(sub):
    p = sub.add_parser("bench", help="run a benchmark suite of preset configs")
    p.add_argument("--suite", required=True, choices=["al", "bo"])
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--seeds", type=int, default=5, help="number of seeds per config")
    p.add_argument("--budget", type=int, default=None, help="queries per run")
    p.add_argument("--warmup", type=int, default=256)
    p.add_argument("--thinning", type=int, default=16)
    p.add_argument("--num-samples", type=int, default=16)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument(
        "--dry-run", action="store_true", help="write configs without running"
    )


def _add_plot(sub):
    p = sub.add_parser("plot", help="plot a metric across runs in a directory")
    p.add_argument("--dir", required=True, help="results directory")
    p.add_argument("--metric", required=True, help="CSV column to plot")


def _add_rerun(sub):
    p = sub.add_parser("rerun", help="re-run an experiment from its manifest")
    p.add_argument("--manifest", required=True, help="path to manifest.json")
    p.add_argument("--out", default=None, help="output directory (default: in place)")


def _cmd_run(args):
    with open(args.config) as fh:
        config = ExperimentConfig.from_dict(json.load(fh))
    if args.workers is not None:
        config.workers = args.workers
    seeds = [args.seed] if args.seed is not None else None
    manifest = run_experiment(config, args.out, seeds=seeds)
    statuses = [info["status"] for info in manifest["seeds"].values()]
    if all(s == "ok" for s in statuses):
        return 0
    return 2


def _cmd_bench(args):
    mcmc = MCMCConfig(
        num_samples=args.num_samples, warmup=args.warmup, thinning=args.thinning
    )
    configs = suite_configs(
        args.suite,
        seeds=tuple(range(args.seeds)),
        budget=args.budget,
        mcmc=mcmc,
        workers=args.workers,
    )
    out = Path(args.out)
    code = 0
    for config in configs:
        run_dir = out / f"{config.task['name']}_{config.run_label}"
        if args.dry_run:
            run_dir.mkdir(parents=True, exist_ok=True)
            with open(run_dir / "config.json", "w") as fh:
                json.dump(config.to_dict(), fh, indent=2)
            continue
        manifest = run_experiment(config, run_dir)
        if any(i["status"] != "ok" for i in manifest["seeds"].values()):
            code = 2
    return code


def _cmd_plot(args):
    path = emit_plots(args.dir, args.metric)
    print(path)
    return 0


def _cmd_rerun(args):
    manifest = run_from_manifest(args.manifest, out_dir=args.out)
    statuses = [info["status"] for info in manifest["seeds"].values()]
    return 0 if all(s == "ok" for s in statuses) else 2


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="salbo",
        description=(
            "Bayesian active learning and self-correcting Bayesian "
            "optimization experiments"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run(sub)
    _add_bench(sub)
    _add_plot(sub)
    _add_rerun(sub)
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "bench": _cmd_bench,
        "plot": _cmd_plot,
        "rerun": _cmd_rerun,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
