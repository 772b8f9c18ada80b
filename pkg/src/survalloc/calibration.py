"""Weighted conformal calibration of lower/upper predictive bounds.

Calibration estimates the miscoverage of trimmed quantile bounds over a
grid of candidate levels, re-weighting each contributing sample by its
inverse censoring probability, and picks the calibrated level subject to a
running-supremum validity constraint. The search space is always
restricted to levels at or below the prior level, where the recorded
weights are valid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import kernels

TAU_SENTINEL = 0.0  # no grid level is valid; the bound degenerates


@dataclass(frozen=True)
class TauGrid:
    """Sorted candidate quantile levels in (0, 1)."""

    values: np.ndarray
    kind: str  # "log-spaced" | "linear"

    def __post_init__(self):
        v = self.values
        if len(v) == 0 or v[0] <= 0.0 or v[-1] >= 1.0 or np.any(np.diff(v) <= 0):
            raise ValueError("grid must be strictly increasing within (0, 1)")

    @staticmethod
    def log_spaced(n: int = 1000, lo: float = 0.001, hi: float = 0.977) -> "TauGrid":
        return TauGrid(np.geomspace(lo, hi, n), "log-spaced")

    @staticmethod
    def linear(n: int = 3000, lo: float = 0.5, hi: float = 0.95) -> "TauGrid":
        return TauGrid(np.linspace(lo, hi, n), "linear")

    def restrict(self, tau_prior: float) -> np.ndarray:
        """Levels usable for calibration: tau <= tau_prior."""
        return self.values[self.values <= tau_prior + 1e-12]


@dataclass
class WeightedObservation:
    """One calibration sample as seen by the miscoverage estimator."""

    sample_id: int
    censored_time: int
    censoring_time: int
    weight: float
    prior_target: int
    quantile_curve: Mapping[float, int]


@dataclass
class CalibrationResult:
    """Calibrated level plus the miscoverage curve it was chosen from."""

    tau_hat: float
    grid_values: np.ndarray
    alpha_curve: np.ndarray
    bound_kind: str  # "lpb" | "upb"
    horizon: int | None = None

    def to_json_dict(self) -> dict:
        return {
            "bound_kind": self.bound_kind,
            "tau_hat": repr(float(self.tau_hat)),
            "grid": [repr(float(v)) for v in self.grid_values],
            "alpha_curve": [repr(float(v)) for v in self.alpha_curve],
        }


def trim_quantile(q: int, cap: int) -> int:
    """min(q, cap); trims raw quantiles (and the no-event sentinel) at the cap."""
    if q < 0 or cap < 1:
        raise ValueError("q must be >= 0 and cap >= 1")
    return min(q, cap)


def prior_targets(model_cdf: np.ndarray, tau_prior: float, cap: int) -> np.ndarray:
    """Trimmed quantile at the prior level for every sample; the per-sample
    target observation length."""
    return kernels.quantile_curves(model_cdf, np.array([tau_prior]), cap)[:, 0]


def miscoverage_estimate(observations: Sequence[WeightedObservation], tau: float) -> float:
    """(1/N) sum_i w_i 1{T~_i < f_tau(X_i) <= C_i}.

    Weights are read only for samples whose indicator fires; the censoring
    probabilities of halted samples are never needed.
    """
    n = len(observations)
    total = 0.0
    for obs in observations:
        f = obs.quantile_curve[tau]
        if obs.censored_time < f <= obs.censoring_time:
            total += obs.weight
    return total / n


def alpha_curve(curves: np.ndarray, censored_time: np.ndarray, censoring: np.ndarray,
                weight: np.ndarray, bound_kind: str = "lpb",
                horizon: int = 0) -> np.ndarray:
    """Vectorized miscoverage estimate over a whole grid.

    ``curves`` holds each sample's trimmed quantiles over the grid (rows
    non-decreasing). For the UPB the indicator is reversed and bounds at the
    horizon never count as miscovered.
    """
    return kernels.miscoverage_curve(
        np.ascontiguousarray(curves, dtype=np.int64),
        np.ascontiguousarray(censored_time, dtype=np.int64),
        np.ascontiguousarray(censoring, dtype=np.int64),
        np.ascontiguousarray(weight, dtype=np.float64),
        bound_kind == "upb",
        horizon,
    )


def calibrate_tau(grid_values: np.ndarray, curve: np.ndarray, alpha: float,
                  bound_kind: str = "lpb", selection: str = "sup") -> float:
    """Calibrated level from the estimated miscoverage curve.

    LPB: valid levels are the prefix of the grid on which the running maximum
    of the curve stays <= alpha; selection "sup" returns the largest valid
    level. UPB mirrors this from the right (smallest valid level). Selection
    "closest" instead returns the valid level whose estimated miscoverage is
    closest to alpha, breaking ties toward the more informative bound.
    Returns the 0 sentinel when no grid level is valid.
    """
    if selection not in ("sup", "closest"):
        raise ValueError(f"unknown selection {selection!r}")
    if bound_kind == "lpb":
        running = np.maximum.accumulate(curve)
        valid = np.flatnonzero(running <= alpha)
    elif bound_kind == "upb":
        running = np.maximum.accumulate(curve[::-1])[::-1]
        valid = np.flatnonzero(running <= alpha)
    else:
        raise ValueError(f"unknown bound kind {bound_kind!r}")
    if len(valid) == 0:
        return TAU_SENTINEL
    if selection == "sup":
        idx = valid[-1] if bound_kind == "lpb" else valid[0]
        return float(grid_values[idx])
    gaps = np.abs(curve[valid] - alpha)
    if bound_kind == "lpb":
        # ties resolve to the largest level (tighter lower bound)
        best = valid[len(gaps) - 1 - np.argmin(gaps[::-1])]
    else:
        best = valid[np.argmin(gaps)]
    return float(grid_values[best])


def build_bound(result: CalibrationResult,
                quantile_curve: Mapping[float, int] | np.ndarray) -> int:
    """Bound for one test sample: its trimmed quantile at the calibrated level.

    The 0 sentinel yields the vacuous bound: 0 for an LPB, the horizon for
    a UPB (always covered through the horizon clause).
    """
    if result.tau_hat == TAU_SENTINEL:
        if result.bound_kind == "lpb":
            return 0
        if result.horizon is None:
            raise ValueError("UPB result requires a horizon")
        return int(result.horizon)
    if isinstance(quantile_curve, np.ndarray):
        idx = int(np.searchsorted(result.grid_values, result.tau_hat))
        return int(quantile_curve[idx])
    return int(quantile_curve[result.tau_hat])


def coverage_eval(event_times: np.ndarray, bounds: np.ndarray, bound_kind: str,
                  horizon: int | None = None) -> tuple[float, float]:
    """(coverage, mean bound size) on a test set.

    LPB coverage: T >= bound. UPB coverage: T <= bound, or the bound sits at
    the horizon (treated as an effective infinity).
    """
    event_times = np.asarray(event_times)
    bounds = np.asarray(bounds)
    if bound_kind == "lpb":
        covered = event_times >= bounds
    else:
        if horizon is None:
            raise ValueError("UPB coverage needs the horizon")
        covered = (event_times <= bounds) | (bounds == horizon)
    return float(covered.mean()), float(bounds.mean())


def calibrate_level(curves: np.ndarray, censored_time: np.ndarray,
                    censoring: np.ndarray, weight: np.ndarray,
                    grid_values: np.ndarray, alpha: float, bound_kind: str,
                    horizon: int, selection: str = "closest") -> CalibrationResult:
    """Full calibration pass: miscoverage curve plus level selection."""
    ac = alpha_curve(curves, censored_time, censoring, weight, bound_kind, horizon)
    tau_hat = calibrate_tau(grid_values, ac, alpha, bound_kind, selection)
    return CalibrationResult(tau_hat, grid_values, ac, bound_kind, horizon)
