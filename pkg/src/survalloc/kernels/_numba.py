"""Numba implementations of the hot kernels.

Loop-oriented twins of :mod:`survalloc.kernels._numpy`; see the package
docstring for the shared contracts. All probability products are handled
in log space: per-step log-probabilities are floored at ``log_floor`` by
the solver so no intermediate ``exp`` can overflow.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_EXP_CAP = 700.0  # exp argument cap, keeps saturated objectives finite


@njit(cache=True)
def pava_nondecreasing(y, w):
    """Weighted L2 projection of y onto non-decreasing sequences."""
    n = y.shape[0]
    vals = np.empty(n)
    wts = np.empty(n)
    sizes = np.empty(n, np.int64)
    top = 0
    for i in range(n):
        vals[top] = y[i]
        wts[top] = w[i]
        sizes[top] = 1
        top += 1
        while top > 1 and vals[top - 2] > vals[top - 1]:
            tw = wts[top - 2] + wts[top - 1]
            vals[top - 2] = (vals[top - 2] * wts[top - 2] + vals[top - 1] * wts[top - 1]) / tw
            wts[top - 2] = tw
            sizes[top - 2] += sizes[top - 1]
            top -= 1
    out = np.empty(n)
    pos = 0
    for blk in range(top):
        for _ in range(sizes[blk]):
            out[pos] = vals[blk]
            pos += 1
    return out


@njit(cache=True)
def quantile_curves(cdf, taus, cap):
    """Per-row smallest t >= 1 with cdf[t-1] >= tau, sentinel T+1, capped.

    cdf rows and taus must be non-decreasing; output rows are then
    non-decreasing in tau as well.
    """
    n, t_max = cdf.shape
    g = taus.shape[0]
    out = np.empty((n, g), np.int64)
    for i in range(n):
        t = 0
        for j in range(g):
            while t < t_max and cdf[i, t] < taus[j]:
                t += 1
            q = t + 1 if t < t_max else t_max + 1
            if q > cap:
                q = cap
            out[i, j] = q
    return out


@njit(cache=True)
def _first_geq(row, v):
    # first index with row[idx] >= v (rows are non-decreasing)
    lo = 0
    hi = row.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if row[mid] >= v:
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit(cache=True)
def _first_gt(row, v):
    # first index with row[idx] > v
    lo = 0
    hi = row.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if row[mid] > v:
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit(cache=True)
def miscoverage_curve(curves, t_tilde, censor, weight, upb, horizon):
    """Weighted miscoverage estimate at every grid point.

    LPB indicator: t_tilde < f <= censor. UPB indicator: f <= censor,
    t_tilde > f and f < horizon. Each sample contributes on a contiguous
    grid interval because curve rows are non-decreasing, so the curve is
    accumulated with a difference array.
    """
    n, g = curves.shape
    diff = np.zeros(g + 1)
    for i in range(n):
        row = curves[i]
        if upb:
            lo = 0
            hi = _first_gt(row, censor[i]) - 1
            h2 = _first_gt(row, t_tilde[i] - 1) - 1
            if h2 < hi:
                hi = h2
            h3 = _first_gt(row, horizon - 1) - 1
            if h3 < hi:
                hi = h3
        else:
            lo = _first_geq(row, t_tilde[i] + 1)
            hi = _first_gt(row, censor[i]) - 1
        if lo <= hi:
            diff[lo] += weight[i]
            diff[hi + 1] -= weight[i]
    out = np.empty(g)
    acc = 0.0
    for j in range(g):
        acc += diff[j]
        out[j] = acc / n
    return out


@njit(cache=True)
def expected_cost_matrix(hazards, priors):
    """Expected remaining acquisition cost E[i, t] after t observed steps.

    E = sum_{k=1..d} k * p(t+k | survived t) + d * (mass beyond d), with
    d = priors[i] - t. Valid for t < priors[i]; other entries are 0.
    """
    n, t_max = hazards.shape
    out = np.zeros((n, t_max))
    for i in range(n):
        for t in range(priors[i]):
            d = priors[i] - t
            surv = 1.0
            cum = 0.0
            e = 0.0
            for k in range(1, d + 1):
                p = surv * hazards[i, t + k - 1]
                e += k * p
                cum += p
                surv *= 1.0 - hazards[i, t + k - 1]
            out[i, t] = e + d * (1.0 - cum)
    return out


@njit(cache=True)
def remaining_quantile_scores(hazards, alpha):
    """Negated conditional (1-alpha)-quantile of remaining time-to-event.

    Entry [i, t-1] conditions on survival past step t-1; the sentinel
    (no event by the horizon at the required level) is one beyond the
    largest remaining time.
    """
    n, t_max = hazards.shape
    level = 1.0 - alpha
    out = np.empty((n, t_max))
    for i in range(n):
        for t in range(1, t_max + 1):
            cum = 0.0
            surv = 1.0
            q = t_max - t + 2
            for r in range(1, t_max - t + 2):
                cum += surv * hazards[i, t + r - 2]
                if cum >= level:
                    q = r
                    break
                surv *= 1.0 - hazards[i, t + r - 2]
            out[i, t - 1] = -float(q)
    return out


@njit(cache=True)
def budget_mean(logp, b):
    """Mean expected budget (1/N) sum_i sum_{u<b_i} exp(cumsum logp)."""
    n = logp.shape[0]
    total = 0.0
    for i in range(n):
        s = 0.0
        for u in range(b[i]):
            s += logp[i, u]
            total += np.exp(s)
    return total / n


@njit(cache=True)
def objective_mean(logp, b):
    """Mean inverse reach probability (1/N) sum_i exp(-sum logp)."""
    n = logp.shape[0]
    total = 0.0
    for i in range(n):
        s = 0.0
        for u in range(b[i]):
            s += logp[i, u]
        a = -s
        if a > _EXP_CAP:
            a = _EXP_CAP
        total += np.exp(a)
    return total / n


@njit(cache=True)
def _lagrangian(logp, b, lam, budget_target):
    return objective_mean(logp, b) + lam * (budget_mean(logp, b) - budget_target)


@njit(cache=True)
def bcd_inner(logp, b, order_flat, order_start, grp_flat, lam, budget_target,
              max_passes, tol, log_floor):
    """Gauss-Seidel block coordinate descent over per-step log-probability blocks.

    Each block solves min_x a*exp(-x) + lam*c*exp(x) per participant, merges
    tied scores by averaging, projects onto the score ordering with PAVA only
    when violated, clips to [log_floor, 0], and keeps the previous block when
    the candidate would increase the block objective (keeps the Lagrangian
    monotone across passes). Mutates ``logp`` in place.

    Returns (passes_used, final_lagrangian, converged).
    """
    n_steps = order_start.shape[0] - 1
    loglam = np.log(lam)
    n_max = logp.shape[0]
    loga = np.empty(n_max)
    logc = np.empty(n_max)
    xs = np.empty(n_max)
    prev = _lagrangian(logp, b, lam, budget_target)
    passes = 0
    converged = False
    for _ in range(max_passes):
        passes += 1
        for t in range(n_steps):
            s0 = order_start[t]
            s1 = order_start[t + 1]
            m = s1 - s0
            if m == 0:
                continue
            phi_old = 0.0
            n_groups = grp_flat[s1 - 1] + 1
            for pos in range(m):
                i = order_flat[s0 + pos]
                bi = b[i]
                pre = 0.0
                for j in range(t):
                    pre += logp[i, j]
                post = 0.0
                for j in range(t + 1, bi):
                    post += logp[i, j]
                # streaming logsumexp of s_u = pre + sum_{t<j<=u} logp, u in [t, bi)
                mx = pre
                acc = 1.0
                s = pre
                for u in range(t + 1, bi):
                    s += logp[i, u]
                    if s > mx:
                        acc = acc * np.exp(mx - s) + 1.0
                        mx = s
                    else:
                        acc += np.exp(s - mx)
                la = -(pre + post)
                lc = mx + np.log(acc)
                loga[pos] = la
                logc[pos] = lc
                xs[pos] = 0.5 * (la - loglam - lc)
                x_old = logp[i, t]
                e1 = la - x_old
                if e1 > _EXP_CAP:
                    e1 = _EXP_CAP
                phi_old += np.exp(e1) + lam * np.exp(lc + x_old)
            # merge score ties by averaging, then isotonic-project if violated
            gy = np.zeros(n_groups)
            gw = np.zeros(n_groups)
            for pos in range(m):
                gid = grp_flat[s0 + pos]
                gy[gid] += xs[pos]
                gw[gid] += 1.0
            for gid in range(n_groups):
                gy[gid] /= gw[gid]
            violated = False
            for gid in range(1, n_groups):
                if gy[gid] < gy[gid - 1]:
                    violated = True
                    break
            if violated:
                gy = pava_nondecreasing(gy, gw)
            phi_new = 0.0
            for pos in range(m):
                x = gy[grp_flat[s0 + pos]]
                if x > 0.0:
                    x = 0.0
                if x < log_floor:
                    x = log_floor
                xs[pos] = x
                e1 = loga[pos] - x
                if e1 > _EXP_CAP:
                    e1 = _EXP_CAP
                phi_new += np.exp(e1) + lam * np.exp(logc[pos] + x)
            if phi_new <= phi_old + 1e-12 * (1.0 + abs(phi_old)):
                for pos in range(m):
                    logp[order_flat[s0 + pos], t] = xs[pos]
        obj = _lagrangian(logp, b, lam, budget_target)
        if abs(prev - obj) <= tol * max(1.0, abs(prev)):
            converged = True
            break
        prev = obj
    return passes, _lagrangian(logp, b, lam, budget_target), converged
