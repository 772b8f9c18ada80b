"""Shared allocation outcome containers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CAL1, CAL2 = 1, 2

# Numeric guards: weights are capped at 1/p_floor purely against float
# underflow; this is far beyond any statistically meaningful weight.
P_FLOOR = 1e-12


@dataclass
class AllocationOutcome:
    """Per-sample record produced by an allocator."""

    sample_id: int
    censoring_time: int
    censored_time: int
    weight: float
    budget_spent: int
    split: int | None = None  # CAL1 / CAL2 for two-phase allocators


class AllocationResult:
    """Array-backed allocation outcomes for one calibration set.

    ``weight`` is the algorithm's bookkeeping weight (valid wherever the
    sample's censoring reached its target length; recorded but never consumed
    otherwise). ``reach_weight`` is the exact inverse probability of reaching
    the target boundary, computable here because the policies are
    deterministic given an instance; its mean is the empirical mean-weight
    diagnostic.
    """

    def __init__(self, censoring: np.ndarray, censored_time: np.ndarray,
                 weight: np.ndarray, budget: np.ndarray,
                 reach_weight: np.ndarray, split: np.ndarray | None = None,
                 cap_weight: np.ndarray | None = None):
        self.censoring = censoring
        self.censored_time = censored_time
        self.weight = weight
        self.budget = budget
        self.reach_weight = reach_weight
        self.split = split
        # Inverse probability of the metric-observation event
        # {T <= C or C = prior}; equals reach_weight except where an
        # allocator's censoring convention lets a final-step halt still
        # count (the locally adaptive rule).
        self.cap_weight = reach_weight if cap_weight is None else cap_weight

    def __len__(self) -> int:
        return len(self.censoring)

    def outcome(self, i: int) -> AllocationOutcome:
        return AllocationOutcome(
            sample_id=i,
            censoring_time=int(self.censoring[i]),
            censored_time=int(self.censored_time[i]),
            weight=float(self.weight[i]),
            budget_spent=int(self.budget[i]),
            split=None if self.split is None else int(self.split[i]),
        )

    def total_budget(self) -> int:
        return int(self.budget.sum())

    def n_events(self, event_time: np.ndarray) -> int:
        """Events actually observed: T <= C."""
        return int((np.asarray(event_time) <= self.censoring).sum())
