"""Compiled scan kernels for time-dependent covariate paths.

The general path re-evaluates every at-risk subject's covariates at each
distinct event time, which is quadratic work. Doing that loop in compiled
code keeps the per-event overhead negligible, so the quadratic term (and not
Python call overhead) dominates the measured runtime. Kernels are
single-threaded with default IEEE semantics, hence bitwise deterministic.

Array layout: all inputs sorted ascending by observed time; covariates are
polynomial coefficient matrices X(t) = X0 + t*X1 + t^2*X2. `starts[g]` is
the first sorted position at risk at event time `times[g]`, and the events
at that time occupy positions starts[g] .. starts[g]+counts[g]-1.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def td_objective(ys, X0, X1, X2, beta, times, counts, starts,
                 need_derivs, score_out, info_out):
    """Log-partial-likelihood scan; optionally score and information.

    Returns the unnormalized log-partial likelihood; score_out/info_out are
    filled with unnormalized sums when need_derivs is true. Callers divide
    by n.
    """
    n, p = X0.shape
    m = times.shape[0]
    loglik = 0.0
    eta = np.empty(n)
    xrow = np.empty(p)
    s1 = np.empty(p)
    s2 = np.empty((p, p))
    score_out[:] = 0.0
    info_out[:, :] = 0.0
    for g in range(m):
        t = times[g]
        a = starts[g]
        d = counts[g]
        mx = -np.inf
        for j in range(a, n):
            acc = 0.0
            for l in range(p):
                acc += (X0[j, l] + t * (X1[j, l] + t * X2[j, l])) * beta[l]
            eta[j] = acc
            if acc > mx:
                mx = acc
        ev_eta = 0.0
        for j in range(a, a + d):
            ev_eta += eta[j]
        s0 = 0.0
        if need_derivs:
            for l in range(p):
                s1[l] = 0.0
                for l2 in range(p):
                    s2[l, l2] = 0.0
            for j in range(a, n):
                ww = np.exp(eta[j] - mx)
                s0 += ww
                for l in range(p):
                    xrow[l] = X0[j, l] + t * (X1[j, l] + t * X2[j, l])
                for l in range(p):
                    wx = ww * xrow[l]
                    s1[l] += wx
                    for l2 in range(l, p):
                        s2[l, l2] += wx * xrow[l2]
            for j in range(a, a + d):
                for l in range(p):
                    score_out[l] += X0[j, l] + t * (X1[j, l] + t * X2[j, l])
            for l in range(p):
                score_out[l] -= d * s1[l] / s0
                for l2 in range(l, p):
                    info_out[l, l2] += d * (s2[l, l2] / s0
                                            - (s1[l] / s0) * (s1[l2] / s0))
        else:
            for j in range(a, n):
                s0 += np.exp(eta[j] - mx)
        loglik += ev_eta - d * (mx + np.log(s0))
    # mirror the upper triangle
    for l in range(p):
        for l2 in range(l + 1, p):
            info_out[l2, l] = info_out[l, l2]
    return loglik


@njit(cache=True)
def td_risk_summaries(ys, X0, X1, X2, beta, times, starts):
    """Per-event-time risk-set summaries for time-dependent paths.

    Returns (logden, ratios): the unnormalized log denominators
    log sum_{y_j >= t_g} e^{beta'X_j(t_g)} and the weighted covariate means
    S1/S0 at each distinct event time.
    """
    n, p = X0.shape
    m = times.shape[0]
    logden = np.empty(m)
    ratios = np.empty((m, p))
    eta = np.empty(n)
    s1 = np.empty(p)
    for g in range(m):
        t = times[g]
        a = starts[g]
        mx = -np.inf
        for j in range(a, n):
            acc = 0.0
            for l in range(p):
                acc += (X0[j, l] + t * (X1[j, l] + t * X2[j, l])) * beta[l]
            eta[j] = acc
            if acc > mx:
                mx = acc
        s0 = 0.0
        for l in range(p):
            s1[l] = 0.0
        for j in range(a, n):
            ww = np.exp(eta[j] - mx)
            s0 += ww
            for l in range(p):
                s1[l] += ww * (X0[j, l] + t * (X1[j, l] + t * X2[j, l]))
        logden[g] = mx + np.log(s0)
        for l in range(p):
            ratios[g, l] = s1[l] / s0
    return logden, ratios


