"""Pure-numpy implementations of the hot kernels.

Vectorized twins of :mod:`survalloc.kernels._numba`, used when the
``SURVALLOC_BACKEND=numpy`` flag is set or numba is unavailable.
"""

from __future__ import annotations

import numpy as np

_EXP_CAP = 700.0


def pava_nondecreasing(y, w):
    """Weighted L2 projection of y onto non-decreasing sequences."""
    n = len(y)
    vals: list[float] = []
    wts: list[float] = []
    sizes: list[int] = []
    for i in range(n):
        vals.append(float(y[i]))
        wts.append(float(w[i]))
        sizes.append(1)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            tw = wts[-2] + wts[-1]
            vals[-2] = (vals[-2] * wts[-2] + vals[-1] * wts[-1]) / tw
            wts[-2] = tw
            sizes[-2] += sizes[-1]
            vals.pop()
            wts.pop()
            sizes.pop()
    return np.repeat(np.asarray(vals), np.asarray(sizes, dtype=np.int64))


def quantile_curves(cdf, taus, cap):
    """Per-row smallest t >= 1 with cdf[t-1] >= tau, sentinel T+1, capped."""
    n, t_max = cdf.shape
    out = np.empty((n, len(taus)), np.int64)
    for i in range(n):
        pos = np.searchsorted(cdf[i], taus, side="left")
        q = np.where(pos < t_max, pos + 1, t_max + 1)
        out[i] = np.minimum(q, cap)
    return out


def miscoverage_curve(curves, t_tilde, censor, weight, upb, horizon):
    """Weighted miscoverage estimate at every grid point (see numba twin)."""
    n, g = curves.shape
    diff = np.zeros(g + 1)
    for i in range(n):
        row = curves[i]
        if upb:
            lo = 0
            hi = min(
                np.searchsorted(row, censor[i], side="right"),
                np.searchsorted(row, t_tilde[i] - 1, side="right"),
                np.searchsorted(row, horizon - 1, side="right"),
            ) - 1
        else:
            lo = int(np.searchsorted(row, t_tilde[i] + 1, side="left"))
            hi = int(np.searchsorted(row, censor[i], side="right")) - 1
        if lo <= hi:
            diff[lo] += weight[i]
            diff[hi + 1] -= weight[i]
    return np.cumsum(diff[:g]) / n


def expected_cost_matrix(hazards, priors):
    """Expected remaining acquisition cost E[i, t] after t observed steps."""
    n, t_max = hazards.shape
    priors = np.asarray(priors, dtype=np.int64)
    out = np.zeros((n, t_max))
    rows = np.arange(n)
    for t in range(int(priors.max())):
        active = priors > t
        hz = hazards[:, t:]
        surv = np.cumprod(1.0 - hz, axis=1)
        shifted = np.concatenate([np.ones((n, 1)), surv[:, :-1]], axis=1)
        p = shifted * hz
        p_cum = np.cumsum(p, axis=1)
        kp_cum = np.cumsum(p * np.arange(1, t_max - t + 1), axis=1)
        d = np.clip(priors - t, 1, t_max - t)
        e = kp_cum[rows, d - 1] + d * (1.0 - p_cum[rows, d - 1])
        out[active, t] = e[active]
    return out


def remaining_quantile_scores(hazards, alpha):
    """Negated conditional (1-alpha)-quantile of remaining time-to-event."""
    n, t_max = hazards.shape
    level = 1.0 - alpha
    out = np.empty((n, t_max))
    for t in range(1, t_max + 1):
        hz = hazards[:, t - 1:]
        surv = np.cumprod(1.0 - hz, axis=1)
        shifted = np.concatenate([np.ones((n, 1)), surv[:, :-1]], axis=1)
        cum = np.cumsum(shifted * hz, axis=1)
        q = (cum < level).sum(axis=1) + 1  # sentinel t_max - t + 2 when never reached
        out[:, t - 1] = -q.astype(np.float64)
    return out


def _masked_cumlog(logp, b):
    n, t_max = logp.shape
    cs = np.cumsum(logp, axis=1)
    valid = np.arange(t_max) < np.asarray(b)[:, None]
    return cs, valid


def budget_mean(logp, b):
    """Mean expected budget (1/N) sum_i sum_{u<b_i} exp(cumsum logp)."""
    cs, valid = _masked_cumlog(logp, b)
    return float(np.where(valid, np.exp(cs), 0.0).sum() / logp.shape[0])


def objective_mean(logp, b):
    """Mean inverse reach probability (1/N) sum_i exp(-sum logp)."""
    n, t_max = logp.shape
    cs = np.cumsum(logp, axis=1)
    b = np.asarray(b, dtype=np.int64)
    tot = np.where(b > 0, cs[np.arange(n), np.maximum(b - 1, 0)], 0.0)
    return float(np.exp(np.minimum(-tot, _EXP_CAP)).sum() / n)


def _lagrangian(logp, b, lam, budget_target):
    return objective_mean(logp, b) + lam * (budget_mean(logp, b) - budget_target)


def bcd_inner(logp, b, order_flat, order_start, grp_flat, lam, budget_target,
              max_passes, tol, log_floor):
    """Vectorized Gauss-Seidel BCD over per-step blocks (see numba twin)."""
    n_steps = len(order_start) - 1
    loglam = np.log(lam)
    prev = _lagrangian(logp, b, lam, budget_target)
    b = np.asarray(b, dtype=np.int64)
    t_max = logp.shape[1]
    cols = np.arange(t_max)
    passes = 0
    converged = False
    for _ in range(max_passes):
        passes += 1
        for t in range(n_steps):
            idx = order_flat[order_start[t]:order_start[t + 1]]
            m = len(idx)
            if m == 0:
                continue
            sub = logp[idx]
            bs = b[idx]
            cs = np.cumsum(sub, axis=1)
            pre = cs[:, t - 1] if t > 0 else np.zeros(m)
            tot = cs[np.arange(m), bs - 1]
            post = tot - cs[:, t]
            s_mat = pre[:, None] + (cs - cs[:, t:t + 1])
            valid = (cols >= t) & (cols < bs[:, None])
            s_mat = np.where(valid, s_mat, -np.inf)
            mx = s_mat.max(axis=1)
            logc = mx + np.log(np.exp(s_mat - mx[:, None]).sum(axis=1))
            la = -(pre + post)
            xs = 0.5 * (la - loglam - logc)
            x_old = sub[:, t]
            phi_old = float(
                (np.exp(np.minimum(la - x_old, _EXP_CAP)) + lam * np.exp(logc + x_old)).sum()
            )
            gid = grp_flat[order_start[t]:order_start[t + 1]]
            n_groups = gid[-1] + 1
            gw = np.bincount(gid, minlength=n_groups).astype(np.float64)
            gy = np.bincount(gid, weights=xs, minlength=n_groups) / gw
            if np.any(np.diff(gy) < 0):
                gy = pava_nondecreasing(gy, gw)
            x_new = np.clip(gy[gid], log_floor, 0.0)
            phi_new = float(
                (np.exp(np.minimum(la - x_new, _EXP_CAP)) + lam * np.exp(logc + x_new)).sum()
            )
            if phi_new <= phi_old + 1e-12 * (1.0 + abs(phi_old)):
                logp[idx, t] = x_new
        obj = _lagrangian(logp, b, lam, budget_target)
        if abs(prev - obj) <= tol * max(1.0, abs(prev)):
            converged = True
            break
        prev = obj
    return passes, _lagrangian(logp, b, lam, budget_target), converged
