import filecmp
import json

import numpy as np
import pytest

from survalloc import ConfigurationError, ExperimentConfig, parse_config
from survalloc.cli import main
from survalloc.config import config_to_dict, default_n1
from survalloc.harness import (
    ExperimentReport,
    TRIAL_COLUMNS,
    AGGREGATED,
    TrialMetrics,
    aggregate_rows,
    emit_report,
    load_trials_csv,
    reaggregate,
    run_experiment,
    run_metrics_experiment,
)

FAST_WORLD = dict(hazard_family="geometric-decay",
                  hazard_params={"decay_h0_lo": 0.1, "decay_h0_hi": 0.4,
                                 "decay_rate_lo": 0.85, "decay_rate_hi": 0.95})


def small_config(**kw):
    base = dict(seed=5, trials=2, n_cal=150, n_test=150, t_max=20,
                budget_per_sample=8.0, n1=20, jobs=1,
                methods=("uncalibrated", "static", "dapro"), **FAST_WORLD)
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_parsing_and_errors():
    cfg = parse_config("seed = 9\nmethods = static, dapro\npopulation.h_lo = 0.01\n"
                       "# comment\nbudget_per_sample = 12.5\n")
    assert cfg.seed == 9
    assert cfg.methods == ("static", "dapro")
    assert cfg.hazard_params["h_lo"] == 0.01
    assert cfg.budget_per_sample == 12.5
    with pytest.raises(ConfigurationError):
        parse_config("not_a_key = 3\n")
    with pytest.raises(ConfigurationError):
        parse_config("methods = static, nonsense\n")
    with pytest.raises(ConfigurationError):
        parse_config("m_cap = 300\nt_max = 100\n")
    with pytest.raises(ConfigurationError):
        parse_config("population.bogus = 1\n")
    with pytest.raises(ConfigurationError):
        parse_config("tau_prior_lpb = 1.5\n")


def test_defaults():
    assert default_n1(8.0) == 25
    assert default_n1(25.0) == 50
    assert default_n1(20.0) == 100
    cfg = ExperimentConfig(t_max=50)
    assert cfg.cap == 50
    assert ExperimentConfig(t_max=500).cap == 200
    assert ExperimentConfig(budget_per_sample=10.0).n1_effective == 25
    assert config_to_dict(cfg)["t_max"] == 50


def test_run_experiment_rows_and_budget_accounting():
    cfg = small_config()
    rep = run_experiment(cfg)
    assert len(rep.rows) == 2 * 3
    assert not rep.failed
    for row in rep.rows:
        assert 0.0 <= row.coverage <= 1.0
        assert row.coverage_deviation == pytest.approx(abs(row.coverage - 0.9))
        if row.method == "uncalibrated":
            assert row.budget_per_sample == 0.0 and row.n_events == 0
        else:
            assert row.budget_per_sample >= 0.0


def test_trial_isolation():
    three = run_experiment(small_config(trials=3)).rows
    two = run_experiment(small_config(trials=2)).rows
    for a, b in zip(two, three[: len(two)]):
        assert a == b


def test_parallel_matches_serial():
    serial = run_experiment(small_config(trials=3, jobs=1)).rows
    parallel = run_experiment(small_config(trials=3, jobs=2)).rows
    assert serial == parallel


def test_infeasible_trial_reported_and_continues():
    cfg = small_config(budget_per_sample=0.5, n1=100, methods=("static", "dapro"))
    rep = run_experiment(cfg)
    assert any(f["method"] == "dapro" for f in rep.failed)
    assert any(r.method == "static" for r in rep.rows)


def test_emit_report_roundtrip(tmp_path):
    cfg = small_config()
    rep = run_experiment(cfg)
    paths = emit_report(rep, str(tmp_path / "out"))
    rows = load_trials_csv(paths["trials"])
    assert rows == rep.rows
    summary = json.loads(open(paths["summary"]).read())
    assert reaggregate(paths["trials"]) == summary["aggregates"]


def test_emit_report_empty_and_cardinality(tmp_path):
    empty = ExperimentReport(small_config(), [], [], TRIAL_COLUMNS, AGGREGATED)
    paths = emit_report(empty, str(tmp_path / "empty"))
    lines = open(paths["trials"]).read().splitlines()
    assert lines == [",".join(TRIAL_COLUMNS)]
    rep = run_experiment(small_config(trials=3, methods=("static", "uncalibrated")))
    paths = emit_report(rep, str(tmp_path / "six"))
    assert len(open(paths["trials"]).read().splitlines()) == 1 + 6


def test_reports_byte_identical(tmp_path):
    cfg = small_config()
    for d in ("a", "b"):
        emit_report(run_experiment(cfg), str(tmp_path / d))
    assert filecmp.cmp(tmp_path / "a" / "trials.csv", tmp_path / "b" / "trials.csv",
                       shallow=False)
    assert filecmp.cmp(tmp_path / "a" / "summary.json", tmp_path / "b" / "summary.json",
                       shallow=False)


def test_jsonl_format(tmp_path):
    rep = run_experiment(small_config())
    paths = emit_report(rep, str(tmp_path / "jl"), fmt="json-lines")
    lines = open(paths["trials"]).read().splitlines()
    assert len(lines) == len(rep.rows)
    rec = json.loads(lines[0])
    assert set(rec) == set(TRIAL_COLUMNS)


def test_aggregate_identities():
    rows = [TrialMetrics(t, "m", 0.9 + 0.01 * t, 0.01 * t, 5.0, 8.0, 3, 1.5)
            for t in range(5)]
    agg = aggregate_rows(rows, AGGREGATED)["m"]
    cov = np.array([r.coverage for r in rows])
    assert float(agg["coverage"]["mean"]) == pytest.approx(cov.mean())
    assert float(agg["coverage"]["variance"]) == pytest.approx(cov.var(ddof=1))
    semi = np.sqrt(np.mean(np.minimum(cov - cov.mean(), 0.0) ** 2))
    assert float(agg["coverage"]["semi_deviation"]) == pytest.approx(semi)


def test_upb_experiment_runs():
    cfg = small_config(bound_kind="upb", methods=("uncalibrated", "static"))
    rep = run_experiment(cfg)
    for row in rep.rows:
        assert row.mean_bound <= cfg.t_max
        assert row.coverage >= 0.5


def test_metrics_experiment_sign_property(tmp_path):
    cfg = small_config(trials=4, methods=("uncalibrated", "static"),
                       budget_per_sample=6.0)
    rep = run_metrics_experiment(cfg)
    assert not rep.failed
    rows = {(r.trial, r.method): r for r in rep.rows}
    for t in range(4):
        unw = rows[(t, "uncalibrated")]
        cal = rows[(t, "static")]
        assert unw.uer_estimate < unw.oracle_uer  # systematic underestimate
        assert cal.oracle_uer == unw.oracle_uer
    paths = emit_report(rep, str(tmp_path / "m"))
    assert load_trials_csv(paths["trials"]) == rep.rows
    summary = json.loads(open(paths["summary"]).read())
    assert reaggregate(paths["trials"]) == summary["aggregates"]


def test_population_replay_fixed_across_trials(tmp_path):
    from survalloc import generate_population, save_population, load_population

    cfg = small_config(trials=2, n_cal=100, n_test=80, methods=("static",))
    spec = cfg.population_spec(300)
    pop = generate_population(spec)
    path = tmp_path / "pop.jsonl"
    save_population(pop, str(path))
    back = load_population(str(path), spec)
    rep = run_experiment(cfg, population=back)
    assert len(rep.rows) == 2
    # trial splits differ, so coverage generally differs across trials
    assert rep.rows[0].trial == 0 and rep.rows[1].trial == 1


def test_calibration_and_diagnostics_records(tmp_path):
    cfg = small_config(trials=1, methods=("static", "dapro"))
    rep = run_experiment(cfg, collect_calibrations=True, collect_diagnostics=True)
    assert len(rep.calibrations) == 2
    assert len(rep.diagnostics) == 1
    paths = emit_report(rep, str(tmp_path / "full"))
    assert "calibrations" in paths and "diagnostics" in paths
    rec = json.loads(open(paths["diagnostics"]).read().splitlines()[0])
    assert rec["method"] == "dapro" and "lambda_trace" in rec


def test_cli_end_to_end(tmp_path):
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    args = ["run", "--out-dir", None, "--trials", "2", "--n-cal", "120",
            "--n-test", "120", "--t-max", "15", "--budget-per-sample", "6",
            "--n1", "15", "--methods", "static,uncalibrated", "--jobs", "1",
            "--hazard-family", "geometric-decay"]
    for out in (out1, out2):
        args[2] = str(out)
        assert main(args) == 0
    assert filecmp.cmp(out1 / "trials.csv", out2 / "trials.csv", shallow=False)
    assert filecmp.cmp(out1 / "summary.json", out2 / "summary.json", shallow=False)

    gen = tmp_path / "pop.jsonl"
    assert main(["generate", "--out", str(gen), "--n-samples", "50",
                 "--t-max", "12"]) == 0
    assert len(open(gen).read().splitlines()) == 50

    bounds_csv = tmp_path / "bounds.csv"
    assert main(["bounds", "--out", str(bounds_csv), "--points", "20"]) == 0
    lines = open(bounds_csv).read().splitlines()
    assert lines[0] == "gamma,delta_bound"
    deltas = [float(l.split(",")[1]) for l in lines[1:]]
    assert all(b > a for a, b in zip(deltas, deltas[1:]))

    agg = tmp_path / "agg.json"
    assert main(["report", "--trials", str(out1 / "trials.csv"),
                 "--out", str(agg)]) == 0
    again = json.loads(open(agg).read())
    assert json.loads(open(out1 / "summary.json").read())["aggregates"] == again["aggregates"]


def test_cli_config_file_with_overrides(tmp_path):
    cfg_file = tmp_path / "exp.cfg"
    cfg_file.write_text("trials = 1\nn_cal = 100\nn_test = 100\nt_max = 12\n"
                        "budget_per_sample = 6\nn1 = 10\nmethods = static\njobs = 1\n")
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg_file), "--out-dir", str(out),
                 "--seed", "3"]) == 0
    summary = json.loads(open(out / "summary.json").read())
    assert summary["config"]["seed"] == 3
    assert summary["config"]["trials"] == 1
