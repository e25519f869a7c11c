"""Command line entry point: ``run``, ``verify`` and ``optimize-eta``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

from .causal_model import CausalBanditError, CausalModel
from .general_bandit import DenseFactors, optimize_eta
from .harness import ALGORITHMS, EXPERIMENTS, ExperimentConfig, run_experiment, write_csv
from .oracle import write_provenance


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="causal-bandits", description="Causal bandit simulator.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a replicated simple-regret experiment")
    run.add_argument("--experiment", required=True, choices=EXPERIMENTS)
    run.add_argument("--config", help="JSON file with ExperimentConfig fields")
    run.add_argument("--out", required=True, help="output CSV path")
    run.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
    run.add_argument("--reps", type=int, help="replications per grid point")
    run.add_argument("--algorithms", help="comma-separated subset of " + ",".join(ALGORITHMS))
    run.add_argument("--workers", type=int, help="worker processes")

    ver = sub.add_parser("verify", help="regenerate derived example values")
    ver.add_argument("--out", default="provenance.json")

    opt = sub.add_parser("optimize-eta", help="minimize m(eta) for a model file")
    opt.add_argument("--model", required=True, help="JSON model with an action list")
    opt.add_argument("--out", required=True, help="CSV of action,eta")
    opt.add_argument("--trace", help="CSV of iteration,best_m")
    opt.add_argument("--tol", type=float, default=1e-4)
    opt.add_argument("--max-iters", type=int, default=5000)
    return ap


def _run(args) -> int:
    overrides: dict = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            overrides.update(json.load(fh))
        overrides.pop("experiment", None)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        overrides["seed"] = args.seed
    if args.reps is not None:
        overrides["reps"] = args.reps
    if args.algorithms:
        overrides["algorithms"] = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    if args.workers is not None:
        overrides["workers"] = args.workers
    config = ExperimentConfig.from_dict(overrides, experiment=args.experiment)
    rows = run_experiment(config)
    write_csv(rows, args.out)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _verify(args) -> int:
    values = write_provenance(args.out)
    print(f"wrote {len(values)} derived values to {args.out}")
    return 0


def _optimize(args) -> int:
    model = CausalModel.load(args.model)
    if not model.actions:
        raise ValueError("model file lists no actions")
    fs = DenseFactors.from_model(model, model.actions)
    res = optimize_eta(fs, tol=args.tol, max_iters=args.max_iters)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["action", "eta"])
        for a, e in zip(model.actions, res.eta.weights):
            w.writerow([model.label(a), repr(float(e))])
    if args.trace:
        with open(args.trace, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "best_m"])
            for k, v in res.trace:
                w.writerow([k, repr(float(v))])
    print(f"m(eta) = {res.value:.6g} after {res.iterations} iterations (converged={res.converged})")
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _run, "verify": _verify, "optimize-eta": _optimize}[args.command]
    try:
        return handler(args)
    except (CausalBanditError, OSError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
