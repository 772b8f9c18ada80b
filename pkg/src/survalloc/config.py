"""Experiment configuration: defaults, validation, and the flat config-file format.

Config files are flat ``key = value`` lines (``#`` comments allowed).
Population keys carry a ``population.`` prefix; ``methods`` is a
comma-separated list. Unknown keys are errors so a run is never silently
misconfigured.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

from .errors import ConfigurationError
from .sim import HAZARD_FAMILIES, SCORE_KINDS, PopulationSpec

METHODS = ("uncalibrated", "static", "greedy", "locally-adaptive", "dapro")
BOUND_KINDS = ("lpb", "upb")
TAU_SELECTIONS = ("closest", "sup")


def default_n1(budget_per_sample: float) -> int:
    """First-split size adapted to the per-sample budget."""
    if budget_per_sample <= 10:
        return 25
    if budget_per_sample == 25:
        return 50
    return 100


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    trials: int = 50
    n_cal: int = 1000
    n_test: int = 1000
    t_max: int = 200
    budget_per_sample: float = 20.0
    alpha: float = 0.1
    delta: float = 0.05
    tau_prior_lpb: float = 0.56
    tau_prior_upb: float = 0.97
    m_cap: int | None = None          # None: min(200, t_max)
    gamma_clip: float = 100.0
    n1: int | None = None             # None: adapted to the budget
    methods: tuple[str, ...] = METHODS
    score_kind: str = "remaining-quantile"
    bound_kind: str = "lpb"
    tau_selection: str = "closest"
    lpb_grid_size: int = 1000
    lpb_grid_lo: float = 0.001
    lpb_grid_hi: float = 0.977
    upb_grid_size: int = 3000
    upb_grid_lo: float = 0.5
    upb_grid_hi: float = 0.95
    greedy_rho: float = 0.1
    greedy_top_k: int = 50
    local_p_min: float = 0.005
    lambda_max: float = 1e14
    lambda_corrected: bool = False
    jobs: int = 0                     # 0: one process per CPU
    hazard_family: str = "mixture"
    hazard_params: Mapping[str, float] = field(default_factory=dict)
    score_noise_sd: float = 0.25
    model_miscalibration: float = 0.0

    @property
    def cap(self) -> int:
        return min(200, self.t_max) if self.m_cap is None else self.m_cap

    @property
    def total_budget(self) -> float:
        return self.budget_per_sample * self.n_cal

    @property
    def n1_effective(self) -> int:
        return default_n1(self.budget_per_sample) if self.n1 is None else self.n1

    @property
    def tau_prior(self) -> float:
        return self.tau_prior_lpb if self.bound_kind == "lpb" else self.tau_prior_upb

    def validate(self) -> None:
        if self.trials < 1 or self.n_cal < 1 or self.n_test < 1:
            raise ConfigurationError("trials, n_cal and n_test must be >= 1")
        if self.bound_kind not in BOUND_KINDS:
            raise ConfigurationError(f"bound_kind must be one of {BOUND_KINDS}")
        if self.tau_selection not in TAU_SELECTIONS:
            raise ConfigurationError(f"tau_selection must be one of {TAU_SELECTIONS}")
        if self.score_kind not in SCORE_KINDS:
            raise ConfigurationError(f"score_kind must be one of {SCORE_KINDS}")
        if self.hazard_family not in HAZARD_FAMILIES:
            raise ConfigurationError(f"hazard_family must be one of {HAZARD_FAMILIES}")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigurationError(f"unknown methods: {sorted(unknown)}")
        if self.cap > self.t_max:
            raise ConfigurationError("the quantile cap M must satisfy M <= t_max")
        if self.budget_per_sample <= 0:
            raise ConfigurationError("budget_per_sample must be positive")
        if not 0.0 < self.alpha < 1.0 or not 0.0 < self.delta < 1.0:
            raise ConfigurationError("alpha and delta must lie in (0, 1)")
        if not 0.0 < self.tau_prior_lpb < 1.0 or not 0.0 < self.tau_prior_upb < 1.0:
            raise ConfigurationError("prior quantile levels must lie in (0, 1)")
        if self.gamma_clip < 1.0:
            raise ConfigurationError("gamma_clip must be >= 1")
        self.population_spec(self.n_cal).validate()

    def population_spec(self, n_samples: int, seed: int | None = None) -> PopulationSpec:
        return PopulationSpec(
            n_samples=n_samples,
            t_max=self.t_max,
            hazard_family=self.hazard_family,
            hazard_params=dict(self.hazard_params),
            score_kind=self.score_kind,
            score_alpha=self.alpha,
            score_noise_sd=self.score_noise_sd,
            model_miscalibration=self.model_miscalibration,
            seed=self.seed if seed is None else seed,
        )


_INT_KEYS = {"seed", "trials", "n_cal", "n_test", "t_max", "m_cap", "n1",
             "lpb_grid_size", "upb_grid_size", "greedy_top_k", "jobs"}
_FLOAT_KEYS = {"budget_per_sample", "alpha", "delta", "tau_prior_lpb",
               "tau_prior_upb", "gamma_clip", "lpb_grid_lo", "lpb_grid_hi",
               "upb_grid_lo", "upb_grid_hi", "greedy_rho", "local_p_min",
               "lambda_max", "score_noise_sd", "model_miscalibration"}
_STR_KEYS = {"score_kind", "bound_kind", "tau_selection", "hazard_family"}
_BOOL_KEYS = {"lambda_corrected"}


def _parse_value(key: str, raw: str):
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    if key in _BOOL_KEYS:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigurationError(f"boolean key {key} got {raw!r}")
    if key in _STR_KEYS:
        return raw
    if key == "methods":
        return tuple(m.strip() for m in raw.split(",") if m.strip())
    raise ConfigurationError(f"unknown config key {key!r}")


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse the flat key-value format into a config; unknown keys are errors."""
    cfg = base if base is not None else ExperimentConfig()
    updates: dict = {}
    hazard_params = dict(cfg.hazard_params)
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"line {lineno}: expected key = value")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key.startswith("population."):
            hazard_params[key[len("population."):]] = float(raw)
        else:
            updates[key] = _parse_value(key, raw)
    updates["hazard_params"] = hazard_params
    cfg = replace(cfg, **updates)
    cfg.validate()
    return cfg


def load_config(path: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), base)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Deterministic JSON-ready snapshot of a config (floats via repr)."""
    out = {}
    for key in sorted(cfg.__dataclass_fields__):
        value = getattr(cfg, key)
        if isinstance(value, float):
            value = repr(value)
        elif isinstance(value, tuple):
            value = list(value)
        elif isinstance(value, Mapping):
            value = {k: repr(float(v)) for k, v in sorted(value.items())}
        out[key] = value
    return out
