"""Hot numeric kernels with a numba and a pure-numpy backend.

Shared contracts (both backends, identical semantics):

``pava_nondecreasing(y, w) -> array``
    Weighted least-squares isotonic (non-decreasing) fit.

``quantile_curves(cdf, taus, cap) -> (n, G) int64``
    Per sample, the smallest t >= 1 whose CDF reaches each tau (sentinel
    t_max + 1 when never reached), trimmed at ``cap``. ``cdf`` rows and
    ``taus`` must be non-decreasing.

``miscoverage_curve(curves, t_tilde, censor, weight, upb, horizon) -> (G,)``
    Weighted miscoverage estimate over the whole grid in one pass.

``expected_cost_matrix(hazards, priors) -> (n, t_max)``
    Expected remaining acquisition cost after t observed steps.

``remaining_quantile_scores(hazards, alpha) -> (n, t_max)``
    Negated conditional (1 - alpha)-quantiles of remaining time-to-event.

``bcd_inner(logp, b, order_flat, order_start, grp_flat, lam, budget_target,
            max_passes, tol, log_floor) -> (passes, lagrangian, converged)``
    In-place Gauss-Seidel block coordinate descent in log-probability space
    with tie merging and PAVA projection onto the score ordering.

``budget_mean(logp, b)`` / ``objective_mean(logp, b)``
    Mean expected budget and mean inverse reach probability of a policy.

The active backend is picked by :mod:`survalloc.backend`; import
``survalloc.kernels._numba`` / ``._numpy`` directly to pin one (used by the
equivalence tests and the backend benchmark).
"""

from ..backend import BACKEND, USE_NUMBA

if USE_NUMBA:
    from ._numba import (
        bcd_inner,
        budget_mean,
        expected_cost_matrix,
        miscoverage_curve,
        objective_mean,
        pava_nondecreasing,
        quantile_curves,
        remaining_quantile_scores,
    )
else:
    from ._numpy import (
        bcd_inner,
        budget_mean,
        expected_cost_matrix,
        miscoverage_curve,
        objective_mean,
        pava_nondecreasing,
        quantile_curves,
        remaining_quantile_scores,
    )

__all__ = [
    "BACKEND",
    "USE_NUMBA",
    "bcd_inner",
    "budget_mean",
    "expected_cost_matrix",
    "miscoverage_curve",
    "objective_mean",
    "pava_nondecreasing",
    "quantile_curves",
    "remaining_quantile_scores",
]
