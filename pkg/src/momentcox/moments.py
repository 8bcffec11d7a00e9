"""Moment functions h(Z) and the whole-data sample moment.

Three families:

- "linear": h(Z) = M (y, delta, features)', a fixed matrix applied to the
  raw record. Mostly a test vehicle and an escape hatch for user-supplied
  summaries.
- "optimal": the estimated efficient score. A pilot subsample's risk-set
  ratios and Breslow increments are frozen at the plain subsample estimate,
  and h is the per-subject score residual against those summaries.
- "aft": the per-subject slope score of a Weibull accelerated failure time
  model fitted on the pilot, a cheap parametric stand-in for the efficient
  score. Time-dependent paths are evaluated at t=0, since an AFT model has
  no notion of a covariate changing during follow-up.

Once built, a spec is a fixed function of the record: evaluation is pure
and bitwise reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coxph import ScoreReference, score_reference, score_residuals
from .data import Dataset
from .exceptions import NonFiniteValue, NotConverged, TooFewEvents

KIND_LINEAR = "linear"
KIND_OPTIMAL = "optimal"
KIND_AFT = "aft"

# fixed chunk length for streaming means; the partial-sum layout depends
# only on the data length, never on worker count, so parallel and serial
# passes agree bitwise
_CHUNK = 1 << 16


@dataclass(frozen=True)
class AftFit:
    """Fitted Weibull accelerated failure time model log T = a + g'X + s W."""

    intercept: float
    slopes: np.ndarray
    log_scale: float
    loglik: float
    n_iter: int

    @property
    def scale(self) -> float:
        return float(np.exp(self.log_scale))


@dataclass(frozen=True)
class MomentSpec:
    """A frozen moment function h with output dimension q.

    Exactly one payload is set: `matrix` for kind "linear", `reference`
    (pilot summaries) for "optimal", `aft` for "aft".
    """

    kind: str
    q: int
    matrix: np.ndarray | None = None
    reference: ScoreReference | None = None
    aft: AftFit | None = None


@dataclass(frozen=True)
class WholeDataMoment:
    mu_hat: np.ndarray
    n_used: int


def build_user_linear_moment(matrix) -> MomentSpec:
    """h(Z) = matrix (y, delta, features)'; matrix is q by (2 + d)."""
    matrix = np.array(matrix, dtype=np.float64, ndmin=2)
    if not np.isfinite(matrix).all():
        raise NonFiniteValue("moment matrix must be finite")
    matrix.flags.writeable = False
    return MomentSpec(kind=KIND_LINEAR, q=matrix.shape[0], matrix=matrix)


def build_optimal_moment(pilot: Dataset, beta_pilot) -> MomentSpec:
    """Freeze the pilot's risk-set summaries at beta_pilot.

    The resulting h is the score residual of a record against the pilot:
    event term minus compensator over pilot event times up to the record's
    own time. Ratios below the first pilot event time extend leftward; the
    compensator sum is empty there.
    """
    if pilot.n_events < pilot.p:
        raise TooFewEvents(
            f"pilot has {pilot.n_events} events for p={pilot.p}"
        )
    ref = score_reference(pilot, beta_pilot)
    return MomentSpec(kind=KIND_OPTIMAL, q=pilot.p, reference=ref)


def fit_weibull_aft(dataset: Dataset, tol=1e-8, max_iter=50) -> AftFit:
    """Maximum likelihood Weibull AFT fit with right censoring.

    Works in (a, g, s) with s = log sigma so the scale stays positive.
    Newton steps use the analytic gradient and Hessian; a step is halved
    until the log-likelihood increases, and an indefinite Hessian gets a
    ridge before solving. Raises NotConverged (carrying the partial fit)
    when the iteration budget runs out.
    """
    X0 = dataset.covariates_at(0.0)
    n_ev = dataset.n_events
    if n_ev < X0.shape[1] + 2:
        raise TooFewEvents(
            f"AFT fit needs at least {X0.shape[1] + 2} events, have {n_ev}"
        )
    if np.any(dataset.y <= 0):
        raise ValueError("AFT fit needs strictly positive times")
    logy = np.log(dataset.y)
    d = dataset.delta.astype(np.float64)
    V = np.column_stack([np.ones(dataset.n), X0])
    k = V.shape[1]

    theta = np.zeros(k)
    theta[0] = logy[dataset.delta == 1].mean()
    s = 0.0

    def _loglik(theta, s):
        # trial steps can push w past the exp overflow point (or exp(s) to
        # 0); the resulting non-finite value is rejected by the halving
        # loop, so silence the warnings
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            w = (logy - V @ theta) / np.exp(s)
            return float(np.sum(d * (w - s) - np.exp(w)))

    def _derivs(theta, s):
        sigma = np.exp(s)
        w = (logy - V @ theta) / sigma
        ew = np.exp(w)
        grad_t = V.T @ ((ew - d) / sigma)
        grad_s = float(np.sum(w * (ew - d) - d))
        Htt = -(V.T * (ew / sigma ** 2)) @ V
        Hts = -(V.T @ ((ew * (w + 1.0) - d) / sigma))
        Hss = float(np.sum(-w * (ew - d) - w * w * ew))
        grad = np.concatenate([grad_t, [grad_s]])
        H = np.zeros((k + 1, k + 1))
        H[:k, :k] = Htt
        H[:k, k] = Hts
        H[k, :k] = Hts
        H[k, k] = Hss
        return grad, H

    ll = _loglik(theta, s)
    grad, H = _derivs(theta, s)
    n_iter = 0
    while np.abs(grad).max() / dataset.n > tol and n_iter < max_iter:
        A = -H
        lam = 0.0
        for _ in range(40):
            try:
                L = np.linalg.cholesky(A + lam * np.eye(k + 1))
                break
            except np.linalg.LinAlgError:
                lam = max(2.0 * lam, 1e-8 * np.trace(A) / (k + 1), 1e-12)
        else:
            break
        step = np.linalg.solve(L.T, np.linalg.solve(L, grad))
        lam_step = 1.0
        accepted = False
        for _ in range(31):
            cand_t = theta + lam_step * step[:k]
            cand_s = s + lam_step * step[k]
            ll_new = _loglik(cand_t, cand_s)
            if np.isfinite(ll_new) and ll_new > ll:
                accepted = True
                break
            lam_step *= 0.5
        if not accepted:
            break
        theta, s, ll = cand_t, cand_s, ll_new
        grad, H = _derivs(theta, s)
        n_iter += 1

    fit = AftFit(
        intercept=float(theta[0]),
        slopes=theta[1:].copy(),
        log_scale=float(s),
        loglik=ll,
        n_iter=n_iter,
    )
    if np.abs(grad).max() / dataset.n > tol:
        raise NotConverged(
            f"AFT fit stalled at gradient norm {np.abs(grad).max():.3e}",
            result=fit,
        )
    return fit


def build_aft_moment(pilot: Dataset) -> MomentSpec:
    """Fit the Weibull AFT model on the pilot and freeze its parameters.

    h is then the slope score per subject: (e^w - delta) X(0) / sigma with
    w the standardized log-time residual. Intercept and scale scores are
    dropped so q stays equal to p.
    """
    aft = fit_weibull_aft(pilot)
    return MomentSpec(kind=KIND_AFT, q=pilot.p, aft=aft)


def moment_values(dataset: Dataset, spec: MomentSpec) -> np.ndarray:
    """h(Z_i) for every record, shape (n, q), input order."""
    if spec.kind == KIND_LINEAR:
        d = dataset.static_dim
        if spec.matrix.shape[1] != 2 + d:
            raise ValueError(
                f"moment matrix has {spec.matrix.shape[1]} columns, "
                f"records provide {2 + d}"
            )
        V = np.column_stack([dataset.y, dataset.delta.astype(np.float64),
                             dataset.features])
        return V @ spec.matrix.T
    if spec.kind == KIND_OPTIMAL:
        return score_residuals(dataset, spec.reference)
    if spec.kind == KIND_AFT:
        aft = spec.aft
        X0 = dataset.covariates_at(0.0)
        if X0.shape[1] != aft.slopes.shape[0]:
            raise ValueError("AFT moment dimension does not match dataset")
        with np.errstate(divide="ignore"):
            logy = np.log(dataset.y)
        w = (logy - aft.intercept - X0 @ aft.slopes) / aft.scale
        out = ((np.exp(w) - dataset.delta) / aft.scale)[:, None] * X0
        if not np.isfinite(out).all():
            raise NonFiniteValue("AFT moment overflowed; check time scale")
        return out
    raise ValueError(f"unknown moment kind {spec.kind!r}")


def streaming_mean(values: np.ndarray) -> np.ndarray:
    """Column means by fixed-size chunk partials summed in index order.

    Used for every moment average in the package so that a full-data
    subsample reproduces the whole-data mean bit for bit.
    """
    n = values.shape[0]
    if n <= _CHUNK:
        return values.sum(axis=0) / n
    partials = [values[a:a + _CHUNK].sum(axis=0) for a in range(0, n, _CHUNK)]
    total = partials[0]
    for part in partials[1:]:
        total = total + part
    return total / n


def whole_data_mean(dataset: Dataset, spec: MomentSpec) -> WholeDataMoment:
    """mu_hat = n^{-1} sum_i h(Z_i), one pass over the data."""
    mu = streaming_mean(moment_values(dataset, spec))
    return WholeDataMoment(mu_hat=mu, n_used=dataset.n)
