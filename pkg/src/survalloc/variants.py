"""Alternative dynamic allocators: greedy exploration and a locally adaptive policy.

The greedy allocator spends a fraction of the budget advancing the samples
with the highest next-step event probability, then finishes the unresolved
ones with the static plan. The locally adaptive allocator tunes a single
multiplier on a fully observed first split (conformal-risk-control style
selector) and then decides continuation step by step from the expected
remaining cost.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .dapro import observe_phase1
from .errors import ConfigurationError
from .outcomes import CAL1, CAL2, AllocationResult
from .sim import SurrogateModel
from .static_alloc import execute_static, plan_static

LAMBDA_MAX = 1e14
P_MIN = 0.005
TOP_K = 50


@dataclass
class GreedyState:
    """Exploration-phase bookkeeping."""

    acquisitions: np.ndarray          # steps acquired per sample
    explore_budget: float
    rho: float
    top_k: int
    event_observed: np.ndarray        # event seen during exploration


@dataclass
class LocalPolicyState:
    """Per-sample state of the locally adaptive policy."""

    lam: float
    p_accum: float = 1.0
    p_min: float = P_MIN


def greedy_explore(event_time: np.ndarray, model_hazards: np.ndarray,
                   prior_targets: np.ndarray, state: GreedyState,
                   rng: np.random.Generator) -> GreedyState:
    """Spend the exploration budget one acquisition at a time.

    Each iteration ranks the active samples by next-step event probability,
    samples one of the top k proportionally to that probability (uniformly
    when all are zero), advances it a step and records a fired event.
    Consumes exactly floor(explore_budget) units. Ties in the ranking break
    toward the lower sample index.
    """
    event_time = np.asarray(event_time, dtype=np.int64)
    prior_targets = np.asarray(prior_targets, dtype=np.int64)
    xi = state.acquisitions
    while state.explore_budget >= 1.0:
        active = np.flatnonzero((xi < prior_targets) & ~state.event_observed)
        if len(active) == 0:
            break
        probs = model_hazards[active, xi[active]]
        kk = min(state.top_k, len(active))
        order = np.lexsort((active, -probs))[:kk]
        cand = active[order]
        cand_p = probs[order]
        u = rng.random()
        total = cand_p.sum()
        if total > 0.0:
            pick = int(np.searchsorted(np.cumsum(cand_p / total), u, side="right"))
        else:
            pick = int(u * kk)
        i_star = cand[min(pick, kk - 1)]
        xi[i_star] += 1
        state.explore_budget -= 1.0
        if xi[i_star] == event_time[i_star]:
            state.event_observed[i_star] = True
    return state


def greedy_finalize(state: GreedyState, event_time: np.ndarray,
                    prior_targets: np.ndarray, budget_remaining: float,
                    rng: np.random.Generator,
                    pi_floor: float = 0.0) -> AllocationResult:
    """Close out exploration with the static plan on the unresolved samples."""
    event_time = np.asarray(event_time, dtype=np.int64)
    prior_targets = np.asarray(prior_targets, dtype=np.int64)
    n = len(event_time)
    xi = state.acquisitions
    active = np.flatnonzero((xi < prior_targets) & ~state.event_observed)

    censoring = prior_targets.copy()
    weight = np.ones(n)
    budget = xi.astype(np.int64).copy()
    reach_weight = np.ones(n)

    if len(active) > 0:
        residual = prior_targets[active] - xi[active]
        plan = plan_static(residual, budget_remaining, pi_floor)
        sub = execute_static(plan, event_time[active] - xi[active], residual, rng)
        censoring[active] = xi[active] + sub.censoring
        weight[active] = sub.weight
        budget[active] = xi[active] + sub.budget
        reach_weight[active] = sub.reach_weight

    censored_time = np.minimum(event_time, censoring)
    return AllocationResult(censoring, censored_time, weight, budget, reach_weight)


def run_greedy(event_time: np.ndarray, model_hazards: np.ndarray,
               prior_targets: np.ndarray, total_budget: float, rho: float,
               top_k: int, rng: np.random.Generator,
               pi_floor: float = 0.0) -> AllocationResult:
    """Two-phase greedy allocation; rho = 0 reduces exactly to the static plan."""
    if not 0.0 <= rho < 1.0:
        raise ConfigurationError("greedy exploration ratio must be in [0, 1)")
    n = len(event_time)
    state = GreedyState(
        acquisitions=np.zeros(n, dtype=np.int64),
        explore_budget=total_budget * rho,
        rho=rho,
        top_k=top_k,
        event_observed=np.zeros(n, dtype=bool),
    )
    state = greedy_explore(event_time, model_hazards, prior_targets, state, rng)
    return greedy_finalize(state, event_time, prior_targets,
                           total_budget * (1.0 - rho), rng, pi_floor)


def expected_remaining_cost(model: SurrogateModel, t: int, prior_target: int) -> float:
    """Expected further steps until the event or the target length.

    Conditioned on having safely observed t steps; the beyond-target mass
    pays the full remaining distance.
    """
    if not 0 <= t < prior_target:
        raise ValueError("t must satisfy 0 <= t < prior_target")
    e = kernels.expected_cost_matrix(model.hazards[None, :],
                                     np.array([prior_target], dtype=np.int64))
    return float(e[0, t])


def local_step(state: LocalPolicyState, model: SurrogateModel, t: int,
               prior_target: int, rng: np.random.Generator) -> tuple[bool, float]:
    """One continuation decision after t acquired steps.

    Computes the expected remaining cost, the target reach probability
    min(1, 1/sqrt(lam * E)) and the local probability min(1, target/p_accum),
    then draws. On success the cumulative product advances; on failure the
    caller halts with censoring time t per the step-policy convention.
    Returns (continue, local probability).
    """
    e = expected_remaining_cost(model, t, prior_target)
    p_target = 1.0 if state.lam <= 0.0 else min(1.0, 1.0 / np.sqrt(state.lam * e))
    p_local = min(1.0, p_target / state.p_accum)
    if rng.random() < p_local:
        state.p_accum *= p_local
        return True, p_local
    return False, p_local


def _policy_running_min(expected_cost: np.ndarray, prior_targets: np.ndarray,
                        lam: float) -> np.ndarray:
    """Cumulative policy reach probabilities.

    Because the local probability is min(1, target/accum), the cumulative
    product after t draws collapses to the running minimum of the target
    probabilities over the first t steps.
    """
    if lam <= 0.0:
        return np.ones_like(expected_cost)
    with np.errstate(divide="ignore"):
        p_target = np.minimum(1.0, 1.0 / np.sqrt(lam * expected_cost))
    t_max = expected_cost.shape[1]
    p_target = np.where(np.arange(t_max) < prior_targets[:, None], p_target, 1.0)
    return np.minimum.accumulate(p_target, axis=1)


def tune_lambda(model_hazards: np.ndarray, event_time: np.ndarray,
                prior_targets: np.ndarray, b2_mean: float, t_max: int,
                with_correction: bool = False, lambda_max: float = LAMBDA_MAX,
                max_iters: int = 60, rel_tol: float = 1e-6,
                ) -> tuple[float, dict]:
    """Smallest multiplier whose expected first-split budget fits b2_mean.

    The empirical expected budget R(lam) is non-increasing in lam; binary
    search returns the feasible endpoint of the final bracket. The corrected
    form adds the finite-sample term (N1/(N1+1)) R + t_max/(N1+1); the default
    is uncorrected. Returns lambda_max with a diagnostic when even that is
    infeasible.
    """
    event_time = np.asarray(event_time, dtype=np.int64)
    prior_targets = np.asarray(prior_targets, dtype=np.int64)
    n1 = len(event_time)
    lengths = np.minimum(event_time, prior_targets)
    expected_cost = kernels.expected_cost_matrix(model_hazards, prior_targets)
    cols = np.arange(model_hazards.shape[1])

    def rhat(lam: float) -> float:
        rm = _policy_running_min(expected_cost, prior_targets, lam)
        return float(np.where(cols < lengths[:, None], rm, 0.0).sum() / n1)

    def feasible(lam: float) -> bool:
        r = rhat(lam)
        if with_correction:
            return n1 / (n1 + 1) * r + t_max / (n1 + 1) <= b2_mean
        return r <= b2_mean

    if feasible(0.0):
        return 0.0, {"feasible": True, "iterations": 0, "rhat": rhat(0.0)}
    if not feasible(lambda_max):
        return lambda_max, {"feasible": False, "iterations": 0, "rhat": rhat(lambda_max)}
    lo, hi = 0.0, lambda_max
    iters = 0
    for _ in range(max_iters):
        if hi - lo <= rel_tol * max(hi, 1.0):
            break
        mid = 0.5 * (lo + hi)
        iters += 1
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi, {"feasible": True, "iterations": iters, "rhat": rhat(hi)}


def run_locally_adaptive(event_time: np.ndarray, model_hazards: np.ndarray,
                         prior_targets: np.ndarray, total_budget: float,
                         n1: int, rng: np.random.Generator, *,
                         p_min: float = P_MIN, lambda_max: float = LAMBDA_MAX,
                         with_correction: bool = False,
                         ) -> tuple[AllocationResult, dict]:
    """Full locally adaptive allocation.

    First split fully observed and used to tune the multiplier; second split
    acquired step by step. Censoring finalization follows this algorithm's
    own convention: a halt with xi + 1 < min(T, prior) censors at xi + 1,
    anything else censors at the prior length. Weights are the inverse
    cumulative policy products floored at p_min.
    """
    event_time = np.asarray(event_time, dtype=np.int64)
    prior_targets = np.asarray(prior_targets, dtype=np.int64)
    n = len(event_time)
    t_max = model_hazards.shape[1]
    n1 = min(n1, n)
    perm = rng.permutation(n)
    cal1 = np.sort(perm[:n1])
    cal2 = np.sort(perm[n1:])

    ph1 = observe_phase1(event_time[cal1], prior_targets[cal1], total_budget,
                         n2=len(cal2))
    lam, lam_diag = tune_lambda(model_hazards[cal1], event_time[cal1],
                                prior_targets[cal1], ph1.b2_mean, t_max,
                                with_correction, lambda_max)

    censoring = np.empty(n, dtype=np.int64)
    censored_time = np.empty(n, dtype=np.int64)
    weight = np.ones(n)
    budget = np.zeros(n, dtype=np.int64)
    reach_weight = np.ones(n)
    cap_weight = np.ones(n)
    split = np.empty(n, dtype=np.int8)

    censoring[cal1] = prior_targets[cal1]
    censored_time[cal1] = ph1.lengths
    budget[cal1] = ph1.lengths
    split[cal1] = CAL1

    if len(cal2) > 0:
        t2 = event_time[cal2]
        priors2 = prior_targets[cal2]
        boundary = np.minimum(t2, priors2)
        expected_cost = kernels.expected_cost_matrix(model_hazards[cal2], priors2)
        rm = _policy_running_min(expected_cost, priors2, lam)
        ones = np.ones((len(cal2), 1))
        p_local = np.minimum(rm / np.concatenate([ones, rm[:, :-1]], axis=1), 1.0)
        cols = np.arange(t_max)
        uniforms = rng.random(p_local.shape)
        fail = (uniforms >= p_local) & (cols < boundary[:, None])
        any_fail = fail.any(axis=1)
        t_stop = np.where(any_fail, fail.argmax(axis=1), boundary)

        c2 = np.where(t_stop + 1 < boundary, t_stop + 1, priors2).astype(np.int64)
        rows = np.arange(len(cal2))
        accum = np.where(t_stop > 0, rm[rows, np.maximum(t_stop, 1) - 1], 1.0)
        w2 = 1.0 / np.maximum(accum, p_min)
        reach2 = 1.0 / np.maximum(rm[rows, boundary - 1], p_min)
        # the halt-at-boundary draw still censors at the prior, so the
        # capped-observation event survives only boundary - 1 draws
        survive_bm1 = np.where(boundary > 1, rm[rows, np.maximum(boundary - 1, 1) - 1], 1.0)
        cap2 = 1.0 / np.maximum(survive_bm1, p_min)

        censoring[cal2] = c2
        censored_time[cal2] = np.minimum(t2, c2)
        weight[cal2] = w2
        budget[cal2] = t_stop
        reach_weight[cal2] = reach2
        cap_weight[cal2] = cap2
        split[cal2] = CAL2

    result = AllocationResult(censoring, censored_time, weight, budget,
                              reach_weight, split, cap_weight)
    diag = {
        "lambda": lam,
        "b2_mean": ph1.b2_mean,
        **lam_diag,
    }
    return result, diag
