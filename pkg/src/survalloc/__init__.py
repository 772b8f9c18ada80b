"""Budget-constrained censoring allocation and weighted conformal survival calibration.

Library layout: `sim` (synthetic hazard populations and surrogate models),
`calibration` (weighted miscoverage estimation and bound construction),
`static_alloc` (the static Bernoulli baseline), `dapro` (the two-phase
globally optimized dynamic allocator), `variants` (greedy and locally
adaptive allocators), `estimators` (closed-form bounds and population
metrics), `harness` / `cli` (experiment orchestration), `kernels`
(numba/numpy hot loops).
"""

from .backend import BACKEND, USE_NUMBA
from .calibration import (
    CalibrationResult,
    TauGrid,
    WeightedObservation,
    build_bound,
    calibrate_level,
    calibrate_tau,
    coverage_eval,
    miscoverage_estimate,
    prior_targets,
    trim_quantile,
)
from .config import ExperimentConfig, load_config, parse_config
from .dapro import (
    ProbabilityMatrix,
    ProjectionModel,
    acquire_phase2,
    fit_projection,
    observe_phase1,
    optimize_probabilities,
    run_dapro,
)
from .errors import ConfigurationError, InfeasibleBudgetError
from .estimators import (
    BoundParams,
    MetricResult,
    budget_bound,
    budget_bound_with_errors,
    coverage_gap,
    delta_vs_max_weight,
    gamma_bias,
    oracle_metrics,
    population_estimate,
)
from .harness import (
    ExperimentReport,
    TrialMetrics,
    emit_report,
    run_experiment,
    run_metrics_experiment,
)
from .outcomes import AllocationOutcome, AllocationResult
from .sim import (
    Population,
    PopulationSpec,
    PromptInstance,
    SurrogateModel,
    build_surrogate,
    generate_population,
    load_population,
    quantile_estimate,
    save_population,
    score,
)
from .static_alloc import StaticPlan, execute_static, plan_static
from .variants import (
    GreedyState,
    LocalPolicyState,
    expected_remaining_cost,
    greedy_explore,
    greedy_finalize,
    local_step,
    run_greedy,
    run_locally_adaptive,
    tune_lambda,
)

__version__ = "0.1.0"
