"""Experiment orchestration: trials, aggregation, and machine-readable reports.

Each trial owns rng streams derived from (seed, trial, role), so trials are
independent, method subsets never perturb each other, and re-running a
config reproduces reports byte for byte. Trials may execute in parallel;
parallelism never crosses a trial boundary.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .calibration import (
    TauGrid,
    calibrate_level,
    coverage_eval,
    prior_targets,
)
from .config import ExperimentConfig, config_to_dict
from .dapro import DaproDiagnostics, run_dapro
from .errors import InfeasibleBudgetError
from .estimators import oracle_metrics, population_estimate
from .kernels import quantile_curves
from .sim import Population, generate_population
from .static_alloc import execute_static, plan_static
from .variants import run_greedy, run_locally_adaptive

TRIAL_COLUMNS = ("trial", "method", "coverage", "coverage_deviation", "mean_bound",
                 "budget_per_sample", "n_events", "mean_weight")
METRIC_COLUMNS = ("trial", "method", "uer_estimate", "uer_raw", "rmttu_estimate",
                  "rmttu_raw", "oracle_uer", "oracle_rmttu", "budget_per_sample",
                  "n_events")
AGGREGATED = ("coverage", "coverage_deviation", "mean_bound", "budget_per_sample",
              "n_events", "mean_weight")
METRIC_AGGREGATED = ("uer_estimate", "uer_raw", "rmttu_estimate", "rmttu_raw",
                     "oracle_uer", "oracle_rmttu", "budget_per_sample", "n_events")

_METHOD_STREAM = {"uncalibrated": 1, "static": 2, "greedy": 3,
                  "locally-adaptive": 4, "dapro": 5}


@dataclass
class TrialMetrics:
    trial: int
    method: str
    coverage: float
    coverage_deviation: float
    mean_bound: float
    budget_per_sample: float
    n_events: int
    mean_weight: float


@dataclass
class MetricsTrialRow:
    trial: int
    method: str
    uer_estimate: float
    uer_raw: float
    rmttu_estimate: float
    rmttu_raw: float
    oracle_uer: float
    oracle_rmttu: float
    budget_per_sample: float
    n_events: int


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rows: list
    failed: list
    columns: tuple
    aggregated: tuple
    calibrations: list | None = None
    diagnostics: list | None = None

    def summary(self) -> dict:
        return {
            "config": config_to_dict(self.config),
            "aggregates": aggregate_rows(self.rows, self.aggregated),
            "failed": self.failed,
            "n_rows": len(self.rows),
        }


def _rng(seed: int, trial: int, role: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, trial, role)))


def _split_population(pop: Population, cfg: ExperimentConfig,
                      rng: np.random.Generator):
    n = len(pop)
    if n < cfg.n_cal + cfg.n_test:
        raise InfeasibleBudgetError(
            f"population of {n} cannot supply n_cal={cfg.n_cal} + n_test={cfg.n_test}"
        )
    perm = rng.permutation(n)
    return pop.subset(perm[:cfg.n_cal]), pop.subset(perm[cfg.n_cal:cfg.n_cal + cfg.n_test])


def _grid(cfg: ExperimentConfig) -> np.ndarray:
    if cfg.bound_kind == "lpb":
        grid = TauGrid.log_spaced(cfg.lpb_grid_size, cfg.lpb_grid_lo, cfg.lpb_grid_hi)
    else:
        grid = TauGrid.linear(cfg.upb_grid_size, cfg.upb_grid_lo, cfg.upb_grid_hi)
    return grid.restrict(cfg.tau_prior)


def _allocate(method: str, cfg: ExperimentConfig, cal: Population,
              priors: np.ndarray, rng: np.random.Generator):
    """Run one allocator on the calibration split. Returns (result, diagnostics)."""
    budget = cfg.budget_per_sample * len(cal)
    if method == "static":
        plan = plan_static(priors, budget, pi_floor=1.0 / cfg.gamma_clip)
        return execute_static(plan, cal.event_time, priors, rng), None
    if method == "greedy":
        result = run_greedy(cal.event_time, cal.model_hazards, priors, budget,
                            cfg.greedy_rho, cfg.greedy_top_k, rng,
                            pi_floor=1.0 / cfg.gamma_clip)
        return result, None
    if method == "locally-adaptive":
        return run_locally_adaptive(cal.event_time, cal.model_hazards, priors,
                                    budget, cfg.n1_effective, rng,
                                    p_min=cfg.local_p_min,
                                    lambda_max=cfg.lambda_max,
                                    with_correction=cfg.lambda_corrected)
    if method == "dapro":
        return run_dapro(cal.event_time, cal.scores, priors, budget,
                         cfg.n1_effective, rng)
    raise ValueError(f"unknown method {method!r}")


def run_trial(cfg: ExperimentConfig, trial: int, population: Population | None = None,
              collect_calibrations: bool = False, collect_diagnostics: bool = False):
    """One coverage trial: population, per-method allocation, calibration, test."""
    rng_pop = _rng(cfg.seed, trial, 0)
    if population is None:
        spec = cfg.population_spec(cfg.n_cal + cfg.n_test)
        pop = generate_population(spec, rng_pop)
    else:
        pop = population
    cal, test = _split_population(pop, cfg, rng_pop)

    grid = _grid(cfg)
    cal_cdf = cal.model_cdf()
    test_cdf = test.model_cdf()
    priors = prior_targets(cal_cdf, cfg.tau_prior, cfg.cap)
    curves = quantile_curves(cal_cdf, grid, cfg.cap)

    rows, failed, calibrations, diagnostics = [], [], [], []
    for method in cfg.methods:
        rng_m = _rng(cfg.seed, trial, _METHOD_STREAM[method])
        if method == "uncalibrated":
            level = cfg.alpha if cfg.bound_kind == "lpb" else 1.0 - cfg.alpha
            bounds = quantile_curves(test_cdf, np.array([level]), cfg.cap)[:, 0]
            coverage, mean_bound = coverage_eval(test.event_time, bounds,
                                                 cfg.bound_kind, cfg.t_max)
            rows.append(TrialMetrics(trial, method, coverage,
                                     abs(coverage - (1.0 - cfg.alpha)), mean_bound,
                                     0.0, 0, 1.0))
            continue
        try:
            result, diag = _allocate(method, cfg, cal, priors, rng_m)
        except InfeasibleBudgetError as exc:
            failed.append({"trial": trial, "method": method, "reason": str(exc)})
            continue
        calib = calibrate_level(curves, result.censored_time, result.censoring,
                                result.weight, grid, cfg.alpha, cfg.bound_kind,
                                cfg.t_max, cfg.tau_selection)
        if calib.tau_hat > 0.0:
            bounds = quantile_curves(test_cdf, np.array([calib.tau_hat]), cfg.cap)[:, 0]
        else:
            fallback = 0 if cfg.bound_kind == "lpb" else cfg.t_max
            bounds = np.full(len(test), fallback, dtype=np.int64)
        coverage, mean_bound = coverage_eval(test.event_time, bounds,
                                             cfg.bound_kind, cfg.t_max)
        rows.append(TrialMetrics(
            trial, method, coverage, abs(coverage - (1.0 - cfg.alpha)), mean_bound,
            result.total_budget() / len(cal), result.n_events(cal.event_time),
            float(result.reach_weight.mean()),
        ))
        if collect_calibrations:
            calibrations.append({"trial": trial, "method": method,
                                 **calib.to_json_dict()})
        if collect_diagnostics and isinstance(diag, DaproDiagnostics):
            diagnostics.append((trial, method, diag))
    return rows, failed, calibrations, diagnostics


def run_metrics_trial(cfg: ExperimentConfig, trial: int):
    """One population-metric trial: every allocator re-run with prior = t_max.

    The oracle is computed from the full population under unlimited
    observation; the "uncalibrated" method is the unweighted uniform
    baseline (the static plan with flat priors, averaged without weights).
    """
    rng_pop = _rng(cfg.seed, trial, 0)
    spec = cfg.population_spec(cfg.n_cal + cfg.n_test)
    pop = generate_population(spec, rng_pop)
    cal, _ = _split_population(pop, cfg, rng_pop)
    oracle_uer, oracle_rmttu = oracle_metrics(pop.event_time, cfg.t_max)
    priors = np.full(len(cal), cfg.t_max, dtype=np.int64)

    rows, failed = [], []
    for method in cfg.methods:
        rng_m = _rng(cfg.seed, trial, _METHOD_STREAM[method])
        weighted = method != "uncalibrated"
        try:
            alloc_method = method if weighted else "static"
            result, _ = _allocate(alloc_method, cfg, cal, priors, rng_m)
        except InfeasibleBudgetError as exc:
            failed.append({"trial": trial, "method": method, "reason": str(exc)})
            continue
        uer = population_estimate(cal.event_time, result.censoring, result.cap_weight,
                                  "event-rate", cfg.t_max, weighted=weighted)
        rmttu = population_estimate(cal.event_time, result.censoring, result.cap_weight,
                                    "restricted-mean-time", cfg.t_max, weighted=weighted)
        rows.append(MetricsTrialRow(
            trial, method, uer.estimate, uer.raw_estimate, rmttu.estimate,
            rmttu.raw_estimate, oracle_uer, oracle_rmttu,
            result.total_budget() / len(cal), result.n_events(cal.event_time),
        ))
    return rows, failed


def _coverage_worker(args):
    cfg, trial, collect_cal, collect_diag = args
    return run_trial(cfg, trial, None, collect_cal, collect_diag)


def _metrics_worker(args):
    cfg, trial = args
    return run_metrics_trial(cfg, trial)


def _n_jobs(cfg: ExperimentConfig) -> int:
    jobs = cfg.jobs if cfg.jobs > 0 else (os.cpu_count() or 1)
    return max(1, min(jobs, cfg.trials))


def run_experiment(cfg: ExperimentConfig, population: Population | None = None,
                   collect_calibrations: bool = False,
                   collect_diagnostics: bool = False) -> ExperimentReport:
    """Coverage experiment over cfg.trials independent splits."""
    cfg.validate()
    rows, failed, calibs, diags = [], [], [], []
    jobs = _n_jobs(cfg)
    if population is not None or jobs == 1:
        results = (run_trial(cfg, t, population, collect_calibrations,
                             collect_diagnostics) for t in range(cfg.trials))
        for r in results:
            _merge(r, rows, failed, calibs, diags)
    else:
        args = [(cfg, t, collect_calibrations, collect_diagnostics)
                for t in range(cfg.trials)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for r in pool.map(_coverage_worker, args):
                _merge(r, rows, failed, calibs, diags)
    return ExperimentReport(cfg, rows, failed, TRIAL_COLUMNS, AGGREGATED,
                            calibs if collect_calibrations else None,
                            diags if collect_diagnostics else None)


def _merge(result, rows, failed, calibs, diags):
    r, f, c, d = result
    rows.extend(r)
    failed.extend(f)
    calibs.extend(c)
    diags.extend(d)


def run_metrics_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Population-metric experiment over cfg.trials independent populations."""
    cfg.validate()
    rows, failed = [], []
    jobs = _n_jobs(cfg)
    if jobs == 1:
        for t in range(cfg.trials):
            r, f = run_metrics_trial(cfg, t)
            rows.extend(r)
            failed.extend(f)
    else:
        args = [(cfg, t) for t in range(cfg.trials)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for r, f in pool.map(_metrics_worker, args):
                rows.extend(r)
                failed.extend(f)
    return ExperimentReport(cfg, rows, failed, METRIC_COLUMNS, METRIC_AGGREGATED)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def aggregate_rows(rows: list, columns: tuple) -> dict:
    """Per-method mean, unbiased sample variance, and downside semi-deviation."""
    methods = sorted({r.method for r in rows})
    out: dict = {}
    for method in methods:
        sub = [r for r in rows if r.method == method]
        stats = {}
        for col in columns:
            x = np.array([float(getattr(r, col)) for r in sub])
            mean = float(x.mean())
            var = float(x.var(ddof=1)) if len(x) > 1 else 0.0
            semi = float(np.sqrt(np.mean(np.minimum(x - mean, 0.0) ** 2)))
            stats[col] = {"mean": repr(mean), "variance": repr(var),
                          "semi_deviation": repr(semi)}
        out[method] = {"n_trials": len(sub), **stats}
    return out


def emit_report(report: ExperimentReport, out_dir: str, fmt: str = "csv") -> dict:
    """Write trial rows plus a summary; returns the written paths.

    csv: one row per (trial, method) under the fixed header. json-lines: the
    same records as JSON objects. The summary is always JSON with sorted
    keys; floats are repr'd so identical runs produce identical bytes.
    """
    if fmt not in ("csv", "json-lines"):
        raise ValueError(f"unknown report format {fmt!r}")
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    if fmt == "csv":
        trials_path = os.path.join(out_dir, "trials.csv")
        with open(trials_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(report.columns)
            for row in report.rows:
                writer.writerow([_fmt(getattr(row, col)) for col in report.columns])
    else:
        trials_path = os.path.join(out_dir, "trials.jsonl")
        with open(trials_path, "w", encoding="utf-8", newline="\n") as fh:
            for row in report.rows:
                rec = {col: _fmt(getattr(row, col)) for col in report.columns}
                fh.write(json.dumps(rec) + "\n")
    paths["trials"] = trials_path

    summary_path = os.path.join(out_dir, "summary.json")
    with open(summary_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report.summary(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths["summary"] = summary_path

    if report.calibrations is not None:
        cal_path = os.path.join(out_dir, "calibrations.jsonl")
        with open(cal_path, "w", encoding="utf-8", newline="\n") as fh:
            for rec in report.calibrations:
                fh.write(json.dumps(rec) + "\n")
        paths["calibrations"] = cal_path
    if report.diagnostics is not None:
        diag_path = os.path.join(out_dir, "diagnostics.jsonl")
        with open(diag_path, "w", encoding="utf-8", newline="\n") as fh:
            for trial, method, diag in report.diagnostics:
                rec = {"trial": trial, "method": method, **diag.to_json_dict()}
                fh.write(json.dumps(rec) + "\n")
        paths["diagnostics"] = diag_path
    return paths


def load_trials_csv(path: str) -> list:
    """Parse an emitted trials.csv back into row objects (for re-aggregation)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        records = list(reader)
    if header == TRIAL_COLUMNS:
        cls, ints = TrialMetrics, {"trial", "n_events"}
    elif header == METRIC_COLUMNS:
        cls, ints = MetricsTrialRow, {"trial", "n_events"}
    else:
        raise ValueError(f"unrecognized trials header: {header}")
    rows = []
    for rec in records:
        kwargs = {}
        for col, raw in zip(header, rec):
            if col == "method":
                kwargs[col] = raw
            elif col in ints:
                kwargs[col] = int(raw)
            else:
                kwargs[col] = float(raw)
        rows.append(cls(**kwargs))
    return rows


def reaggregate(trials_path: str) -> dict:
    """Re-aggregate a saved trials file into the summary statistics."""
    rows = load_trials_csv(trials_path)
    columns = AGGREGATED if isinstance(rows[0], TrialMetrics) else METRIC_AGGREGATED
    return aggregate_rows(rows, columns)
