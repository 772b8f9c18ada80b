"""Variance-optimal static Bernoulli censoring allocation (the main baseline).

The plan observes sample i to its full target length with probability
pi_i = min(1, 1/sqrt(lambda* f_i)) and not at all otherwise, where the
closed-form multiplier lambda* = ((1/B) sum_i sqrt(f_i))^2 makes the
expected censoring total equal the budget when no probability clips at 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .outcomes import AllocationResult


@dataclass
class StaticPlan:
    """Closed-form allocation: multiplier and per-sample observation probabilities."""

    lambda_star: float
    probabilities: np.ndarray

    def expected_budget(self, prior_targets: np.ndarray) -> float:
        """Expected censoring total sum_i f_i * pi_i (equals B when unclipped)."""
        return float((prior_targets * self.probabilities).sum())


def plan_static(prior_targets: np.ndarray, total_budget: float,
                pi_floor: float = 0.0) -> StaticPlan:
    """Compute lambda* and the clipped observation probabilities.

    ``pi_floor`` optionally floors the probabilities (1/gamma weight clipping);
    it never binds at the default operating point.
    """
    prior_targets = np.asarray(prior_targets, dtype=np.float64)
    if total_budget <= 0:
        raise ConfigurationError("total budget must be positive")
    if len(prior_targets) == 0 or prior_targets.min() < 1:
        raise ConfigurationError("prior targets must all be >= 1")
    lam = (np.sqrt(prior_targets).sum() / total_budget) ** 2
    pi = np.minimum(1.0, 1.0 / np.sqrt(lam * prior_targets))
    if pi_floor > 0.0:
        pi = np.maximum(pi, pi_floor)
    return StaticPlan(float(lam), pi)


def execute_static(plan: StaticPlan, event_time: np.ndarray,
                   prior_targets: np.ndarray,
                   rng: np.random.Generator) -> AllocationResult:
    """Draw the Bernoulli censoring times and account the consumed budget.

    Success gives C = f_i and consumes min(T, C) steps; failure gives C = 0
    and consumes nothing. The weight is 1/pi_i for every sample.
    """
    event_time = np.asarray(event_time, dtype=np.int64)
    prior_targets = np.asarray(prior_targets, dtype=np.int64)
    observed = rng.random(len(event_time)) < plan.probabilities
    censoring = np.where(observed, prior_targets, 0).astype(np.int64)
    censored_time = np.minimum(event_time, censoring)
    budget = np.where(observed, np.minimum(event_time, prior_targets), 0).astype(np.int64)
    weight = 1.0 / plan.probabilities
    return AllocationResult(censoring, censored_time, weight.copy(), budget,
                            reach_weight=weight.copy())
