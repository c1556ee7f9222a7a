"""Command-line entry point: `simulate --config cfg.json --out results/`."""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from .harness import (
    ExperimentConfig,
    cvprobe_experiment,
    emit_results,
    iteration_census,
    mismatch_experiment,
    nmse_sweep,
)

EXPERIMENTS = ("nmse", "mismatch", "census", "cvprobe")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simulate", description=__doc__)
    p.add_argument("--config", required=True, help="JSON experiment config (see README)")
    p.add_argument("--out", required=True, help="output directory for results.csv / results.json")
    p.add_argument("--trials", type=int, default=None, help="override trials per sweep point")
    p.add_argument("--seed", type=int, default=None, help="override master seed")
    p.add_argument("--estimator", choices=("nfcfgs", "fcfgs", "both"), default=None)
    p.add_argument("--experiment", choices=EXPERIMENTS, default="nmse")
    p.add_argument("--workers", type=int, default=None, help="parallel sweep workers")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    ecfg = ExperimentConfig.from_json(Path(args.config).read_text())
    overrides = {}
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.estimator is not None:
        overrides["estimators"] = ("nfcfgs", "fcfgs") if args.estimator == "both" else (args.estimator,)
    if overrides:
        import dataclasses

        ecfg = dataclasses.replace(ecfg, **overrides)

    out = Path(args.out)
    if args.experiment == "nmse":
        table = nmse_sweep(ecfg)
    elif args.experiment == "mismatch":
        table = mismatch_experiment(ecfg)
    elif args.experiment == "census":
        table = iteration_census(ecfg)
    else:
        out.mkdir(parents=True, exist_ok=True)
        table = cvprobe_experiment(ecfg, out)
    emit_results(table, out, ecfg, experiment=args.experiment)
    print(json.dumps({"experiment": args.experiment, "rows": len(table), "out": str(out)}))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
