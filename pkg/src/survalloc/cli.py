"""Command-line harness.

Subcommands: generate (population to a record file), run (coverage
experiment), metrics (population-estimator experiment), bounds (coverage-gap
and budget-bound tables), report (re-aggregate saved trial files). Flags
mirror the config keys; --config loads a file and explicit flags override it.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .config import ExperimentConfig, load_config, parse_config
from .estimators import BoundParams, budget_bound, delta_vs_max_weight
from .harness import emit_report, reaggregate, run_experiment, run_metrics_experiment
from .sim import generate_population, load_population, save_population

_OVERRIDE_KEYS = (
    "seed", "trials", "n_cal", "n_test", "t_max", "budget_per_sample", "alpha",
    "delta", "tau_prior_lpb", "tau_prior_upb", "m_cap", "gamma_clip", "n1",
    "methods", "score_kind", "bound_kind", "tau_selection", "greedy_rho",
    "greedy_top_k", "local_p_min", "lambda_max", "jobs", "hazard_family",
    "score_noise_sd", "model_miscalibration",
)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="config file (flat key = value lines)")
    for key in _OVERRIDE_KEYS:
        parser.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None)


def _build_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = [f"{key} = {getattr(args, key)}" for key in _OVERRIDE_KEYS
                 if getattr(args, key, None) is not None]
    if overrides:
        cfg = parse_config("\n".join(overrides), cfg)
    cfg.validate()
    return cfg


def _cmd_generate(args) -> int:
    cfg = _build_config(args)
    spec = cfg.population_spec(args.n_samples or cfg.n_cal + cfg.n_test)
    pop = generate_population(spec)
    save_population(pop, args.out)
    print(f"wrote {len(pop)} instances to {args.out}")
    return 0


def _cmd_run(args) -> int:
    cfg = _build_config(args)
    population = None
    if args.population:
        population = load_population(args.population,
                                     cfg.population_spec(0))
    report = run_experiment(cfg, population,
                            collect_calibrations=args.save_calibration,
                            collect_diagnostics=args.save_diagnostics)
    paths = emit_report(report, args.out_dir, args.format)
    for name, path in paths.items():
        print(f"{name}: {path}")
    if report.failed:
        print(f"{len(report.failed)} failed (trial, method) pairs; see summary.json")
    return 0


def _cmd_metrics(args) -> int:
    cfg = _build_config(args)
    report = run_metrics_experiment(cfg)
    paths = emit_report(report, args.out_dir, args.format)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def _cmd_bounds(args) -> int:
    gammas = np.linspace(args.gamma_min, args.gamma_max, args.points)
    pairs = delta_vs_max_weight(gammas, args.n_cal, args.alpha, args.delta)
    lines = ["gamma,delta_bound"]
    lines += [f"{repr(g)},{repr(d)}" for g, d in pairs]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        print(f"wrote {args.points} rows to {args.out}")
    else:
        sys.stdout.write(text)
    if args.budget:
        params = BoundParams(n_cal=args.n_cal, alpha=args.alpha, delta=args.delta,
                             n2=args.n2, t_max=args.t_max, b2_mean=args.b2_mean,
                             total_budget=args.total_budget)
        print(f"budget_bound_per_sample: {repr(budget_bound(params))}")
    return 0


def _cmd_report(args) -> int:
    summary = reaggregate(args.trials)
    text = json.dumps({"aggregates": summary}, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="survalloc")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="write a population record file")
    _add_config_flags(p_gen)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--n-samples", dest="n_samples", type=int, default=None)
    p_gen.set_defaults(func=_cmd_generate)

    p_run = sub.add_parser("run", help="coverage experiment")
    _add_config_flags(p_run)
    p_run.add_argument("--out-dir", required=True)
    p_run.add_argument("--format", choices=("csv", "json-lines"), default="csv")
    p_run.add_argument("--population", help="replay a saved population file")
    p_run.add_argument("--save-calibration", action="store_true")
    p_run.add_argument("--save-diagnostics", action="store_true")
    p_run.set_defaults(func=_cmd_run)

    p_met = sub.add_parser("metrics", help="population-estimator experiment")
    _add_config_flags(p_met)
    p_met.add_argument("--out-dir", required=True)
    p_met.add_argument("--format", choices=("csv", "json-lines"), default="csv")
    p_met.set_defaults(func=_cmd_metrics)

    p_bnd = sub.add_parser("bounds", help="coverage-gap / budget-bound tables")
    p_bnd.add_argument("--out")
    p_bnd.add_argument("--n-cal", dest="n_cal", type=int, default=3000)
    p_bnd.add_argument("--alpha", type=float, default=0.1)
    p_bnd.add_argument("--delta", type=float, default=0.05)
    p_bnd.add_argument("--gamma-min", dest="gamma_min", type=float, default=1.0)
    p_bnd.add_argument("--gamma-max", dest="gamma_max", type=float, default=100.0)
    p_bnd.add_argument("--points", type=int, default=100)
    p_bnd.add_argument("--budget", action="store_true",
                       help="also print the finite-sample budget bound")
    p_bnd.add_argument("--n2", type=int, default=2900)
    p_bnd.add_argument("--t-max", dest="t_max", type=int, default=200)
    p_bnd.add_argument("--b2-mean", dest="b2_mean", type=float, default=18.0)
    p_bnd.add_argument("--total-budget", dest="total_budget", type=float, default=60000.0)
    p_bnd.set_defaults(func=_cmd_bounds)

    p_rep = sub.add_parser("report", help="re-aggregate a saved trials file")
    p_rep.add_argument("--trials", required=True)
    p_rep.add_argument("--out")
    p_rep.set_defaults(func=_cmd_report)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
