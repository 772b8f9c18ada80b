"""Two-phase dynamic censoring allocation with a globally optimized policy.

Phase I fully observes a small first split (up to each sample's target
length), then solves for per-sample continuation probabilities that
minimize the mean inverse reach probability subject to a mean-budget
constraint and per-step monotonicity in the risk scores. Per-step
projection models transport scores to probabilities; Phase II deploys them
as sequential Bernoulli continuation draws on the second split, tracking
exact inverse-probability weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import kernels
from .errors import InfeasibleBudgetError
from .outcomes import CAL1, CAL2, P_FLOOR, AllocationOutcome, AllocationResult

# Solver operating point: multiplier bracket, iteration caps and tolerance.
LAMBDA_LO = 1e-8
LAMBDA_HI = 1e14
MAX_OUTER = 60
MAX_INNER = 10
BCD_TOL = 1e-9
# Per-step probability floor; matches the projection-model output floor so
# Phase II can realize any optimized probability.
STEP_FLOOR = 1e-6
P_MIN_FIT = 1e-6


@dataclass
class Phase1Data:
    """Full-observation phase on the first split."""

    lengths: np.ndarray      # b_i = min(T_i, prior_i)
    budget_spent: int
    b2_mean: float           # remaining budget per second-split sample


@dataclass
class ProbabilityMatrix:
    """Optimized continuation probabilities for the first split.

    Entry [i, t-1] is the step-t continuation probability of sample i,
    meaningful for t <= lengths[i].
    """

    probs: np.ndarray
    lengths: np.ndarray
    scores: np.ndarray

    def budget_per_sample(self) -> np.ndarray:
        """Expected budget sum_t prod_{j<=t} P(j) per sample."""
        n, t = self.probs.shape
        cum = np.cumprod(self.probs, axis=1)
        mask = np.arange(t) < self.lengths[:, None]
        return np.where(mask, cum, 0.0).sum(axis=1)

    def mean_budget(self) -> float:
        return float(self.budget_per_sample().mean())

    def objective(self) -> float:
        """Mean inverse reach probability, the optimizer's objective."""
        logp = np.log(self.probs)
        return kernels.objective_mean(logp, self.lengths.astype(np.int64))


@dataclass
class OptimizerDiagnostics:
    lambda_trace: list[tuple[float, float]] = field(default_factory=list)
    converged: bool = True
    feasible: bool = True
    log_shift: float = 0.0
    used_uniform_fallback: bool = False


@dataclass
class ProjectionModel:
    """Monotone score-to-probability map for one step.

    Logistic in the score with non-negative slope; degenerate fits fall back
    to a constant, and steps with no training pairs to the constant 1.
    ``log_shift`` is a global recalibration applied by the model-set fit so
    the deployed policy's expected budget matches the optimized one.
    """

    kind: str                  # "logistic" | "constant" | "one"
    slope: float = 0.0
    intercept: float = 0.0
    value: float = 1.0
    p_min: float = P_MIN_FIT
    log_shift: float = 0.0

    def predict(self, scores: np.ndarray) -> np.ndarray:
        s = np.asarray(scores, dtype=np.float64)
        if self.kind == "one":
            return np.ones_like(s)
        if self.kind == "constant":
            base = np.full_like(s, min(max(self.value, self.p_min), 1.0))
        else:
            base = np.clip(_sigmoid(self.slope * s + self.intercept),
                           self.p_min, 1.0)
        if self.log_shift == 0.0:
            return base
        return np.clip(base * math.exp(self.log_shift), self.p_min, 1.0)

    def __call__(self, score: float) -> float:
        return float(self.predict(np.array([score]))[0])


@dataclass
class DaproDiagnostics:
    n1: int
    b2_mean: float
    total_budget: int
    mean_weight: float
    n_events: int
    optimizer: OptimizerDiagnostics
    cal1_indices: np.ndarray
    prob_matrix: ProbabilityMatrix | None

    def to_json_dict(self) -> dict:
        return {
            "n1": self.n1,
            "b2_mean": repr(self.b2_mean),
            "total_budget": self.total_budget,
            "mean_weight": repr(self.mean_weight),
            "n_events": self.n_events,
            "lambda_trace": [[repr(l), repr(b)] for l, b in self.optimizer.lambda_trace],
            "converged": self.optimizer.converged,
            "feasible": self.optimizer.feasible,
            "log_shift": repr(self.optimizer.log_shift),
            "used_uniform_fallback": self.optimizer.used_uniform_fallback,
        }


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def observe_phase1(event_time: np.ndarray, prior_targets: np.ndarray,
                   total_budget: float, n2: int) -> Phase1Data:
    """Fully observe the first split; hard error when the budget cannot cover it.

    A budget exactly equal to the phase-I cost is the allowed degenerate
    case: b2_mean = 0 and the phase-II policy collapses to its floor.
    """
    lengths = np.minimum(np.asarray(event_time, dtype=np.int64),
                         np.asarray(prior_targets, dtype=np.int64))
    spent = int(lengths.sum())
    if spent > total_budget:
        raise InfeasibleBudgetError(
            f"phase-I observation needs {spent} units but the budget is {total_budget}"
        )
    b2_mean = (total_budget - spent) / n2 if n2 > 0 else 0.0
    return Phase1Data(lengths, spent, float(b2_mean))


def _step_orders(scores: np.ndarray, lengths: np.ndarray, t_solve: int):
    """Per-step participant order (ascending score, stable) and tie groups."""
    order_flat: list[np.ndarray] = []
    grp_flat: list[np.ndarray] = []
    order_start = np.zeros(t_solve + 1, dtype=np.int64)
    for t in range(t_solve):
        part = np.flatnonzero(lengths > t)
        s = scores[part, t]
        o = np.argsort(s, kind="stable")
        sorted_s = s[o]
        grp = np.zeros(len(o), dtype=np.int64)
        if len(o) > 1:
            grp[1:] = np.cumsum(sorted_s[1:] != sorted_s[:-1])
        order_flat.append(part[o])
        grp_flat.append(grp)
        order_start[t + 1] = order_start[t] + len(o)
    if t_solve == 0:
        return (np.zeros(0, dtype=np.int64), order_start, np.zeros(0, dtype=np.int64))
    return (np.concatenate(order_flat), order_start, np.concatenate(grp_flat))


def uniform_feasible_probability(lengths: np.ndarray, b2_mean: float,
                                 step_floor: float = STEP_FLOOR) -> float:
    """Largest constant continuation probability whose mean budget fits b2_mean."""
    lengths = np.asarray(lengths, dtype=np.int64)

    def budget(q: float) -> float:
        powers = np.cumprod(np.full(int(lengths.max()), q))
        return float(sum(powers[:b].sum() for b in lengths) / len(lengths))

    if budget(1.0) <= b2_mean:
        return 1.0
    lo, hi = step_floor, 1.0
    if budget(lo) > b2_mean:
        return lo
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if budget(mid) <= b2_mean:
            lo = mid
        else:
            hi = mid
    return lo


def optimize_probabilities(scores: np.ndarray, lengths: np.ndarray, b2_mean: float,
                           *, max_outer: int = MAX_OUTER, max_inner: int = MAX_INNER,
                           tol: float = BCD_TOL, lambda_lo: float = LAMBDA_LO,
                           lambda_hi: float = LAMBDA_HI,
                           step_floor: float = STEP_FLOOR,
                           ) -> tuple[ProbabilityMatrix, OptimizerDiagnostics]:
    """Solve the constrained continuation-probability problem on the first split.

    Outer geometric bisection over the Lagrange multiplier, inner Gauss-Seidel
    block coordinate descent in log space with PAVA monotonicity projection,
    then a terminal uniform log-shift to pin the mean-budget constraint. The
    best feasible iterate is returned with a diagnostic flag if anything
    failed to converge.
    """
    lengths = np.asarray(lengths, dtype=np.int64)
    n1 = len(lengths)
    t_solve = int(lengths.max())
    scores = np.ascontiguousarray(scores[:, :t_solve], dtype=np.float64)
    diag = OptimizerDiagnostics()
    log_floor = math.log(step_floor)

    p_init = min(max(b2_mean / (1.0 + b2_mean), step_floor), 1.0)
    base = np.full((n1, t_solve), math.log(p_init))
    order_flat, order_start, grp_flat = _step_orders(scores, lengths, t_solve)

    def solve_at(lam: float, warm: np.ndarray):
        logp = warm.copy()
        _, _, conv = kernels.bcd_inner(logp, lengths, order_flat, order_start,
                                       grp_flat, lam, b2_mean, max_inner, tol,
                                       log_floor)
        bud = kernels.budget_mean(logp, lengths)
        diag.lambda_trace.append((lam, bud))
        diag.converged = diag.converged and bool(conv)
        return logp, bud

    lo, hi = lambda_lo, lambda_hi
    logp_lo, bud_lo = solve_at(lo, base)
    if bud_lo <= b2_mean:
        best = logp_lo
    else:
        logp_hi, bud_hi = solve_at(hi, base)
        best, best_gap = logp_hi, abs(bud_hi - b2_mean)
        if abs(bud_lo - b2_mean) < best_gap:
            best, best_gap = logp_lo, abs(bud_lo - b2_mean)
        lo_state, hi_state = (logp_lo, bud_lo), (logp_hi, bud_hi)
        for _ in range(max_outer):
            mid = math.sqrt(lo * hi)
            if mid <= lo or mid >= hi:
                break
            # warm-start from the bracket endpoint whose budget is closest
            if abs(lo_state[1] - b2_mean) <= abs(hi_state[1] - b2_mean):
                warm = lo_state[0]
            else:
                warm = hi_state[0]
            logp_mid, bud_mid = solve_at(mid, warm)
            if abs(bud_mid - b2_mean) <= best_gap:
                best, best_gap = logp_mid, abs(bud_mid - b2_mean)
            if bud_mid > b2_mean:
                lo, lo_state = mid, (logp_mid, bud_mid)
            else:
                hi, hi_state = mid, (logp_mid, bud_mid)

    best = _feasibility_shift(best, lengths, b2_mean, log_floor, diag)

    # never return worse than the best feasible uniform policy
    q_star = uniform_feasible_probability(lengths, b2_mean, step_floor)
    uniform = np.full((n1, t_solve), math.log(q_star))
    if (kernels.objective_mean(uniform, lengths)
            < kernels.objective_mean(best, lengths)
            and kernels.budget_mean(uniform, lengths) <= b2_mean + 1e-6):
        best = uniform
        diag.used_uniform_fallback = True

    probs = np.exp(best)
    return ProbabilityMatrix(probs, lengths, scores), diag


def _feasibility_shift(logp: np.ndarray, lengths: np.ndarray, b2_mean: float,
                       log_floor: float, diag: OptimizerDiagnostics) -> np.ndarray:
    """Uniform log-shift (bisection) enforcing mean budget <= b2_mean."""

    def shifted(s: float) -> np.ndarray:
        return np.clip(logp + s, log_floor, 0.0)

    def budget(s: float) -> float:
        return kernels.budget_mean(shifted(s), lengths)

    s_hi = -float(logp.min())  # everything at probability one
    if budget(s_hi) <= b2_mean:
        diag.log_shift = s_hi
        return shifted(s_hi)
    s_lo = log_floor - float(logp.max())  # everything at the floor
    if budget(s_lo) > b2_mean:
        diag.feasible = False
        diag.log_shift = s_lo
        return shifted(s_lo)
    for _ in range(200):
        mid = 0.5 * (s_lo + s_hi)
        if budget(mid) <= b2_mean:
            s_lo = mid
        else:
            s_hi = mid
    diag.log_shift = s_lo
    return shifted(s_lo)


def fit_projection(step_scores: np.ndarray, step_probs: np.ndarray,
                   p_min: float = P_MIN_FIT) -> ProjectionModel:
    """Least-squares logistic (Platt-style) fit of probabilities on scores.

    Slope constrained >= 0 so the map is monotone; an empty pair set yields
    the constant-1 model, constant scores a mean-target constant.
    """
    s = np.asarray(step_scores, dtype=np.float64)
    p = np.asarray(step_probs, dtype=np.float64)
    if len(s) == 0:
        return ProjectionModel("one")
    mean_p = float(np.clip(p.mean(), 1e-6, 1.0 - 1e-12))
    if np.ptp(s) == 0.0:
        return ProjectionModel("constant", value=mean_p, p_min=p_min)

    c0 = math.log(mean_p / max(1.0 - mean_p, 1e-12))
    c0 = min(max(c0, -50.0), 50.0)
    scale = max(np.ptp(s), 1e-12)

    def loss_grad(theta):
        a, c = theta
        z = np.clip(a * s + c, -500.0, 500.0)
        f = 1.0 / (1.0 + np.exp(-z))
        r = f - p
        common = 2.0 * r * f * (1.0 - f)
        return float((r * r).mean()), np.array([
            (common * s).mean(), common.mean()
        ])

    best = None
    for a0 in (1.0 / scale, 4.0 / scale, 0.25 / scale):
        res = minimize(loss_grad, np.array([a0, c0]), jac=True, method="L-BFGS-B",
                       bounds=[(0.0, None), (-50.0, 50.0)],
                       options={"maxiter": 200})
        if best is None or res.fun < best.fun:
            best = res
    a, c = best.x
    return ProjectionModel("logistic", slope=float(a), intercept=float(c), p_min=p_min)


def fit_projection_models(matrix: ProbabilityMatrix, t_max: int,
                          p_min: float = P_MIN_FIT,
                          budget_target: float | None = None) -> list[ProjectionModel]:
    """One projection model per step t = 1..t_max.

    With a ``budget_target``, the fitted models are recalibrated by one
    global log-shift so the deployed policy's expected budget on the
    Phase-I sample meets the target (least-squares fits shrink toward the
    mean, which otherwise inflates the realized budget). Unfitted
    constant-1 steps are left untouched.
    """
    models = []
    for t in range(1, t_max + 1):
        if t > matrix.probs.shape[1]:
            models.append(ProjectionModel("one"))
            continue
        part = matrix.lengths >= t
        models.append(fit_projection(matrix.scores[part, t - 1],
                                     matrix.probs[part, t - 1], p_min))
    if budget_target is not None:
        shift = _model_budget_shift(models, matrix, budget_target, p_min)
        for m in models:
            if m.kind != "one":
                m.log_shift = shift
    return models


def _model_budget_shift(models: list[ProjectionModel], matrix: ProbabilityMatrix,
                        target: float, p_min: float) -> float:
    """Largest uniform log-shift keeping the fitted policy's expected budget
    on the Phase-I sample at or below the target."""
    t_solve = matrix.probs.shape[1]
    lengths = matrix.lengths.astype(np.int64)
    base = np.empty((len(lengths), t_solve))
    for t in range(t_solve):
        base[:, t] = models[t].predict(matrix.scores[:, t])
    mask = np.arange(t_solve) < lengths[:, None]

    def budget(s: float) -> float:
        cum = np.cumprod(np.clip(base * math.exp(s), p_min, 1.0), axis=1)
        return float(np.where(mask, cum, 0.0).sum() / len(lengths))

    s_hi = -math.log(max(base.min(), p_min))
    if budget(s_hi) <= target:
        return s_hi
    s_lo = math.log(p_min) - math.log(base.max())
    if budget(s_lo) > target:
        return s_lo
    for _ in range(100):
        mid = 0.5 * (s_lo + s_hi)
        if budget(mid) <= target:
            s_lo = mid
        else:
            s_hi = mid
    return s_lo


def phase2_probabilities(models: list[ProjectionModel],
                         scores: np.ndarray) -> np.ndarray:
    """Continuation probabilities P[i, t-1] = M_t(S_i(t)) for the second split."""
    n, t_max = scores.shape
    out = np.ones((n, t_max))
    for t in range(t_max):
        out[:, t] = models[t].predict(scores[:, t])
    return out


def _acquire(probs: np.ndarray, event_time: np.ndarray, prior_targets: np.ndarray,
             uniforms: np.ndarray):
    """Vectorized sequential Bernoulli acquisition for the second split.

    A sample advances while draws succeed, stopping early at its boundary
    min(T, prior); budget is charged per successful step only. Returns
    (censoring, censored_time, weight, budget, reach_weight).
    """
    n, t_max = probs.shape
    boundary = np.minimum(event_time, prior_targets)
    cols = np.arange(t_max)
    fail = (uniforms >= probs) & (cols < boundary[:, None])
    any_fail = fail.any(axis=1)
    t_stop = np.where(any_fail, fail.argmax(axis=1), boundary)
    censoring = np.where(t_stop == boundary, prior_targets, t_stop).astype(np.int64)
    censored_time = np.minimum(event_time, censoring)
    cum = np.cumsum(np.log(probs), axis=1)
    rows = np.arange(n)
    logprod = np.where(t_stop > 0, cum[rows, np.maximum(t_stop, 1) - 1], 0.0)
    weight = 1.0 / np.maximum(np.exp(logprod), P_FLOOR)
    reach_log = cum[rows, boundary - 1]
    reach_weight = 1.0 / np.maximum(np.exp(reach_log), P_FLOOR)
    return censoring, censored_time, weight, t_stop.astype(np.int64), reach_weight


def acquire_phase2(scores: np.ndarray, event_time: int, prior_target: int,
                   models: list[ProjectionModel],
                   rng: np.random.Generator) -> AllocationOutcome:
    """Single-sample Phase-II acquisition (see `_acquire` for the batch path)."""
    t_max = len(scores)
    probs = phase2_probabilities(models, scores[None, :])
    uniforms = rng.random((1, t_max))
    censoring, censored, weight, budget, _ = _acquire(
        probs, np.array([event_time], dtype=np.int64),
        np.array([prior_target], dtype=np.int64), uniforms)
    return AllocationOutcome(0, int(censoring[0]), int(censored[0]),
                             float(weight[0]), int(budget[0]), split=CAL2)


def run_dapro(event_time: np.ndarray, scores: np.ndarray,
              prior_targets: np.ndarray, total_budget: float, n1: int,
              rng: np.random.Generator, *, p_min_fit: float = P_MIN_FIT,
              ) -> tuple[AllocationResult, DaproDiagnostics]:
    """End-to-end allocation: split, Phase I, optimization, projection, Phase II."""
    event_time = np.asarray(event_time, dtype=np.int64)
    prior_targets = np.asarray(prior_targets, dtype=np.int64)
    n = len(event_time)
    n1 = min(n1, n)
    perm = rng.permutation(n)
    cal1 = np.sort(perm[:n1])
    cal2 = np.sort(perm[n1:])

    ph1 = observe_phase1(event_time[cal1], prior_targets[cal1], total_budget,
                         n2=len(cal2))

    censoring = np.empty(n, dtype=np.int64)
    censored_time = np.empty(n, dtype=np.int64)
    weight = np.ones(n)
    budget = np.zeros(n, dtype=np.int64)
    reach_weight = np.ones(n)
    split = np.empty(n, dtype=np.int8)

    censoring[cal1] = prior_targets[cal1]
    censored_time[cal1] = ph1.lengths
    budget[cal1] = ph1.lengths
    split[cal1] = CAL1

    matrix = None
    opt_diag = OptimizerDiagnostics()
    if len(cal2) > 0:
        matrix, opt_diag = optimize_probabilities(scores[cal1], ph1.lengths,
                                                  ph1.b2_mean)
        models = fit_projection_models(matrix, scores.shape[1], p_min_fit,
                                       budget_target=ph1.b2_mean)
        probs2 = phase2_probabilities(models, scores[cal2])
        uniforms = rng.random(probs2.shape)
        c2, ct2, w2, b2, rw2 = _acquire(probs2, event_time[cal2],
                                        prior_targets[cal2], uniforms)
        censoring[cal2] = c2
        censored_time[cal2] = ct2
        weight[cal2] = w2
        budget[cal2] = b2
        reach_weight[cal2] = rw2
        split[cal2] = CAL2

    result = AllocationResult(censoring, censored_time, weight, budget,
                              reach_weight, split)
    diag = DaproDiagnostics(
        n1=n1,
        b2_mean=ph1.b2_mean,
        total_budget=result.total_budget(),
        mean_weight=float(reach_weight.mean()),
        n_events=result.n_events(event_time),
        optimizer=opt_diag,
        cal1_indices=cal1,
        prob_matrix=matrix,
    )
    return result, diag
