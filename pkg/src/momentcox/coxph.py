"""Cox partial-likelihood machinery.

Risk-set sums, the log-partial likelihood with its score and information,
a Newton-Raphson solver with step-halving, the Breslow cumulative baseline
hazard, martingale residuals, and per-subject efficient-score contributions.

Ties are handled Breslow style: tied events share one baseline increment
with the full risk-set denominator. Integrals against the event counting
process are finite sums over observed event times.

Two evaluation engines sit behind the public functions. Time-invariant
paths use a single vectorized pass per evaluation: linear predictors are
exponentiated once (centered by the global maximum) and risk-set sums are
reversed cumulative sums over the event-sorted arrays; the second-moment
part of the information is folded into one Gram product with per-subject
prefix weights, so memory stays O(np). Time-dependent paths re-evaluate
covariates at every distinct event time inside a compiled scan.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import _kernels
from .data import Dataset
from .exceptions import (
    EmptyRiskSet,
    NonFiniteValue,
    SingularInformation,
    TooFewEvents,
)


@dataclass
class RiskSums:
    """Empirical risk-set averages at one time point.

    s0 is n^{-1} sum_{y_j >= t} e^{beta'X_j(t)}; s1 and s2 add one and two
    factors of X_j(t). s1/s2 are None when not requested.
    """

    s0: float
    s1: np.ndarray | None
    s2: np.ndarray | None
    t: float
    beta: np.ndarray


@dataclass
class FitResult:
    beta_hat: np.ndarray
    information: np.ndarray
    variance: np.ndarray
    n_iter: int
    converged: bool
    final_score_norm: float
    loglik: float


@dataclass
class BaselineHazard:
    """Step-function cumulative baseline hazard (distinct event times and
    positive increments)."""

    times: np.ndarray
    increments: np.ndarray

    def cumulative_at(self, t):
        """Lambda_0(t) = sum of increments at event times <= t."""
        csum = np.concatenate(([0.0], np.cumsum(self.increments)))
        return csum[np.searchsorted(self.times, t, side="right")]


@dataclass(frozen=True)
class ScoreReference:
    """Frozen risk-set summaries of a reference sample at a fixed beta.

    Holds the distinct reference event times, the covariate risk means
    S1/S0 there, the Breslow increments, and beta itself. Evaluating
    per-subject score residuals against such a reference is the common core
    of efficient_score_contributions (reference = the dataset itself) and
    of the estimated-optimal moment function (reference = a pilot draw).
    """

    times: np.ndarray
    ratios: np.ndarray
    increments: np.ndarray
    beta: np.ndarray


def _check_beta(dataset, beta):
    beta = np.asarray(beta, dtype=np.float64).reshape(-1)
    if beta.shape[0] != dataset.p:
        raise ValueError(f"beta has length {beta.shape[0]}, expected {dataset.p}")
    if not np.isfinite(beta).all():
        raise NonFiniteValue("beta must be finite")
    return beta


def _td_inputs(dataset):
    """Sorted arrays with zero-filled coefficient matrices for the kernels."""
    ys, ds_, P0, P1, P2 = dataset._sorted_arrays()
    z = np.zeros_like(P0)
    return ys, ds_, P0, (P1 if P1 is not None else z), (P2 if P2 is not None else z)


def _objective(dataset, beta, derivs=True):
    """(loglik, score, info) of the normalized log-partial likelihood.

    score/info are None when derivs is False. All three share one pass.
    """
    beta = _check_beta(dataset, beta)
    times, counts, starts = dataset._event_groups()
    n, p = dataset.n, dataset.p

    if dataset.path.time_invariant:
        ys, ds_, X, _, _ = dataset._sorted_arrays()
        eta = X @ beta
        c = eta.max()
        w = np.exp(eta - c)
        rc0 = np.cumsum(w[::-1])[::-1]
        with np.errstate(divide="ignore"):
            logS0 = np.log(rc0[starts])
        ev = ds_ == 1
        loglik = (eta[ev].sum() - counts @ (c + logS0)) / n
        if not derivs:
            return loglik, None, None
        rc1 = np.cumsum((w[:, None] * X)[::-1], axis=0)[::-1]
        S0 = rc0[starts]
        S1 = rc1[starts]
        # S0 can underflow to 0 when a trial step runs far off; the caller
        # checks finiteness, so suppress the divide warnings here
        with np.errstate(divide="ignore", invalid="ignore"):
            score_num = X[ev].sum(axis=0) - counts @ (S1 / S0[:, None])
            # fold sum_g d_g * S2_g / S0_g into one Gram product: subject j
            # at sorted position contributes w_j x_j x_j' * (sum of d_g/S0_g
            # over groups whose risk set includes j)
            acum = np.cumsum(counts / S0)
            lengths = np.diff(np.concatenate((starts, [n])))
            a = np.concatenate((np.zeros(starts[0] if len(starts) else n),
                                np.repeat(acum, lengths)))
            term1 = X.T @ (X * (w * a)[:, None])
            q = counts / (S0 * S0)
            term2 = (S1 * q[:, None]).T @ S1
        info = (term1 - term2) / n
        info = (info + info.T) / 2.0
        return loglik, score_num / n, info

    ys, ds_, X0, X1, X2 = _td_inputs(dataset)
    score_out = np.empty(p)
    info_out = np.empty((p, p))
    ll = _kernels.td_objective(ys, X0, X1, X2, beta,
                               times, counts.astype(np.int64),
                               starts.astype(np.int64),
                               derivs, score_out, info_out)
    if not derivs:
        return ll / n, None, None
    return ll / n, score_out / n, info_out / n


def log_partial_likelihood(dataset: Dataset, beta) -> float:
    """Normalized log-partial likelihood.

    n^{-1} sum_i Delta_i [beta'X_i(Y_i) - log sum_{y_j >= Y_i} e^{beta'X_j(Y_i)}],
    with the inner sum unnormalized. Linear predictors are centered before
    exponentiation to guard against overflow.
    """
    return _objective(dataset, beta, derivs=False)[0]


def score(dataset: Dataset, beta) -> np.ndarray:
    """Score vector U(beta) = n^{-1} sum_i integral {X_i(t) - risk mean} dN_i(t)."""
    return _objective(dataset, beta, derivs=True)[1]


def information(dataset: Dataset, beta) -> np.ndarray:
    """Information matrix, minus the Hessian of the log-partial likelihood.

    Symmetric and positive semidefinite by construction (each event
    contributes a weighted covariance of covariates over its risk set).
    """
    return _objective(dataset, beta, derivs=True)[2]


def risk_sums(dataset: Dataset, beta, t, order=2) -> RiskSums:
    """Risk-set sums S^(l)(t, beta) for l up to `order`, normalized by n.

    Raises EmptyRiskSet when no subject has y >= t.
    """
    beta = _check_beta(dataset, beta)
    ys, *_ = dataset._sorted_arrays()
    k = int(np.searchsorted(ys, t, side="left"))
    n = dataset.n
    if k == n:
        raise EmptyRiskSet(f"no subject at risk at t={t}")
    keep = np.sort(dataset.sort_index[k:])
    X = dataset.covariates_at(float(t))[keep]
    w = np.exp(X @ beta)
    s0 = w.sum() / n
    s1 = (w @ X) / n if order >= 1 else None
    s2 = (X.T * w) @ X / n if order >= 2 else None
    return RiskSums(s0=float(s0), s1=s1, s2=s2, t=float(t), beta=beta)


def _chol_spd(M):
    """Cholesky factor with the singularity contract: a pivot below
    1e-12 times the largest diagonal entry raises SingularInformation."""
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as e:
        raise SingularInformation(str(e)) from e
    piv = np.diag(L) ** 2
    if piv.min() < 1e-12 * max(M.diagonal().max(), np.finfo(float).tiny):
        raise SingularInformation(
            f"information pivot {piv.min():.3e} below threshold"
        )
    return L


def _spd_solve(M, b):
    L = _chol_spd(M)
    return scipy.linalg.cho_solve((L, True), b, check_finite=False)


def newton_raphson_fit(dataset: Dataset, init=None, tol=1e-8, max_iter=50,
                       max_step_halvings=20) -> FitResult:
    """Maximize the log-partial likelihood by Newton-Raphson.

    Parameters
    ----------
    dataset : Dataset
        Needs at least one event.
    init : array_like, optional
        Starting value, default zeros.
    tol : float
        Convergence when the max-norm of the score drops to tol.
    max_iter : int
    max_step_halvings : int
        A proposed step is halved until the log-partial likelihood strictly
        increases; if that never happens the iteration stops.

    Returns
    -------
    FitResult
        With converged=False when the iteration limit or halving limit was
        hit first; the variance field is (n * information)^{-1} at the final
        beta, where n is this dataset's size.

    Raises
    ------
    SingularInformation
        When a Newton system has a pivot below 1e-12 of the top diagonal.
    """
    if dataset.n_events < 1:
        raise TooFewEvents("cannot fit with zero events")
    p = dataset.p
    beta = np.zeros(p) if init is None else _check_beta(dataset, init)
    loglik, U, I = _objective(dataset, beta, derivs=True)
    n_iter = 0
    converged = np.abs(U).max() <= tol
    while not converged and n_iter < max_iter:
        step = _spd_solve(I, U)
        lam = 1.0
        accepted = False
        for _ in range(max_step_halvings + 1):
            cand = beta + lam * step
            l_new = _objective(dataset, cand, derivs=False)[0]
            if np.isfinite(l_new) and l_new > loglik:
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            break
        beta = cand
        loglik, U, I = _objective(dataset, beta, derivs=True)
        n_iter += 1
        converged = np.abs(U).max() <= tol
    variance = _spd_solve(I, np.eye(p)) / dataset.n
    variance = (variance + variance.T) / 2.0
    return FitResult(
        beta_hat=beta,
        information=I,
        variance=variance,
        n_iter=n_iter,
        converged=bool(converged),
        final_score_norm=float(np.abs(U).max()),
        loglik=float(loglik),
    )


def _event_time_summaries(dataset, beta):
    """Log denominators and covariate risk means at each distinct event time."""
    beta = _check_beta(dataset, beta)
    times, counts, starts = dataset._event_groups()
    if dataset.path.time_invariant:
        ys, ds_, X, _, _ = dataset._sorted_arrays()
        eta = X @ beta
        c = eta.max()
        w = np.exp(eta - c)
        rc0 = np.cumsum(w[::-1])[::-1]
        rc1 = np.cumsum((w[:, None] * X)[::-1], axis=0)[::-1]
        S0 = rc0[starts]
        logden = c + np.log(S0)
        ratios = rc1[starts] / S0[:, None]
    else:
        ys, ds_, X0, X1, X2 = _td_inputs(dataset)
        logden, ratios = _kernels.td_risk_summaries(
            ys, X0, X1, X2, beta, times, starts.astype(np.int64))
    return times, counts, logden, ratios


def breslow_baseline(dataset: Dataset, beta) -> BaselineHazard:
    """Breslow estimator of the cumulative baseline hazard.

    The increment at each distinct event time is (events there) divided by
    the unnormalized risk-set sum of e^{beta'X(t)}.
    """
    if dataset.n_events < 1:
        raise TooFewEvents("baseline hazard needs at least one event")
    times, counts, logden, _ = _event_time_summaries(dataset, beta)
    increments = counts * np.exp(-logden)
    return BaselineHazard(times=times, increments=increments)


def martingale_residuals(dataset: Dataset, beta, baseline: BaselineHazard):
    """Residuals M_i = Delta_i - sum_{event times t <= y_i} e^{beta'X_i(t)} dL(t).

    The baseline must come from the same dataset and beta; then the
    residuals sum to zero up to rounding.
    """
    beta = _check_beta(dataset, beta)
    n = dataset.n
    if dataset.path.time_invariant:
        X = dataset._expanded()[0]
        cum = baseline.cumulative_at(dataset.y)
        return dataset.delta - np.exp(X @ beta) * cum
    ys, ds_, *_ = dataset._sorted_arrays()
    starts_here = np.searchsorted(ys, baseline.times, side="left")
    comp = np.zeros(n)
    for g in range(len(baseline.times)):
        a = starts_here[g]
        Xg = _sorted_covariates_at(dataset, float(baseline.times[g]), a)
        comp[a:] += np.exp(Xg @ beta) * baseline.increments[g]
    out = np.empty(n)
    out[dataset.sort_index] = ds_ - comp
    return out


def _sorted_covariates_at(dataset, t, start):
    """X_j(t) for sorted positions start..n-1."""
    _, _, P0, P1, P2 = dataset._sorted_arrays()
    X = P0[start:]
    if P2 is not None:
        X = X + t * (P1[start:] if P1 is not None else 0.0) + (t * t) * P2[start:]
    elif P1 is not None:
        X = X + t * P1[start:]
    return X


def score_reference(dataset: Dataset, beta) -> ScoreReference:
    """Freeze this dataset's risk-set summaries at beta for later score
    evaluation (on itself or on another sample)."""
    if dataset.n_events < 1:
        raise TooFewEvents("score reference needs at least one event")
    times, counts, logden, ratios = _event_time_summaries(dataset, beta)
    return ScoreReference(
        times=times,
        ratios=ratios,
        increments=counts * np.exp(-logden),
        beta=_check_beta(dataset, beta),
    )


def score_residuals(dataset: Dataset, ref: ScoreReference) -> np.ndarray:
    """Per-subject score residuals of `dataset` against frozen reference
    summaries.

    Row i is Delta_i {X_i(y_i) - ratio(y_i)} minus the compensator sum over
    reference event times t <= y_i of {X_i(t) - ratio(t)} e^{beta'X_i(t)} dL(t),
    where ratio and dL are the reference's risk means and Breslow increments.
    The ratio at an off-grid y is the value at the largest reference event
    time <= y (extended leftward below the first one, where the compensator
    sum is empty anyway).

    With reference = the dataset itself at beta, rows sum to n * score(beta).
    """
    m = len(ref.times)
    pos = np.searchsorted(ref.times, dataset.y, side="right") - 1
    ratio_idx = np.clip(pos, 0, m - 1)
    if dataset.path.time_invariant:
        X = dataset._expanded()[0]
        dterm = dataset.delta[:, None] * (X - ref.ratios[ratio_idx])
        G = np.exp(X @ ref.beta)
        A1 = np.concatenate(([0.0], np.cumsum(ref.increments)))
        A2 = np.vstack((np.zeros(X.shape[1]),
                        np.cumsum(ref.ratios * ref.increments[:, None], axis=0)))
        k = pos + 1
        comp = G[:, None] * (X * A1[k][:, None] - A2[k])
        out = dterm - comp
    else:
        Xown = dataset.covariates_at_own_times()
        dterm = dataset.delta[:, None] * (Xown - ref.ratios[ratio_idx])
        ys, *_ = dataset._sorted_arrays()
        starts_here = np.searchsorted(ys, ref.times, side="left")
        comp_s = np.zeros((dataset.n, dataset.p))
        for g in range(m):
            a = starts_here[g]
            if a == dataset.n:
                break
            Xg = _sorted_covariates_at(dataset, float(ref.times[g]), a)
            wg = np.exp(Xg @ ref.beta) * ref.increments[g]
            comp_s[a:] += wg[:, None] * (Xg - ref.ratios[g])
        comp = np.empty_like(comp_s)
        comp[dataset.sort_index] = comp_s
        out = dterm - comp
    if not np.isfinite(out).all():
        raise NonFiniteValue("score residuals overflowed")
    return out


def efficient_score_contributions(dataset: Dataset, beta) -> np.ndarray:
    """Per-subject efficient-score contributions at beta.

    Equivalent to score_residuals with the dataset itself as reference;
    column sums equal n * score(dataset, beta) up to rounding.
    """
    return score_residuals(dataset, score_reference(dataset, beta))
