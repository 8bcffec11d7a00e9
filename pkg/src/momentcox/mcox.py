"""The moment-assisted subsample estimator and its companions.

Given a plain subsample fit, a frozen moment function, and the whole-data
moment average, the correction step solves a linearized GMM problem whose
closed form is

    beta_mcox = beta_uni - Sigma^{-1} Omega12 Omega22^{+} g2,

where g2 is the subsample-vs-whole-data moment discrepancy and the Omega
blocks estimate the joint covariance of the subsample score and the moment
discrepancy. The plug-in variance is the sandwich

    V_h = r^{-1} Sigma^{-1} (Omega11 - Omega12 Omega22^{+} Omega21) Sigma^{-1},

never larger on the diagonal than the plain subsample variance because the
subtracted term is positive semidefinite. A one-step alternative that adds
Sigma^{-1} mu_hat to the subsample estimate (oses_estimate) is included as
a baseline; it ignores the sampling covariance structure.

Everything uses the realized subsample size: Poisson draws make r random,
and the realized count is the measurable quantity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.stats

from .coxph import FitResult, _chol_spd, efficient_score_contributions
from .data import Dataset
from .exceptions import DegenerateVariance
from .moments import MomentSpec, WholeDataMoment, moment_values, streaming_mean

# relative eigenvalue cutoff below which a moment covariance direction is
# treated as degenerate
_PINV_RTOL = 1e-10


@dataclass(frozen=True)
class OmegaBlocks:
    """Covariance blocks of (subsample score, moment discrepancy).

    omega11 is the uncentered second moment of the per-subject score
    residuals; omega12 and omega22 carry the finite-population factor
    (1 - r/n) and center the moment values at the subsample mean.
    """

    omega11: np.ndarray
    omega12: np.ndarray
    omega22: np.ndarray
    finite_pop_factor: float
    realized_r: int


@dataclass(frozen=True)
class McoxResult:
    beta_mcox: np.ndarray
    beta_uni: np.ndarray
    variance: np.ndarray
    alpha: float | None
    g2_norm: float
    fallback: bool


def _psd_pinv(M, rtol=_PINV_RTOL):
    """Symmetric pseudo-inverse; eigenvalues <= rtol * largest are dropped.

    Returns (pinv, rank). rank 0 means the matrix is degenerate throughout.
    """
    vals, vecs = np.linalg.eigh((M + M.T) / 2.0)
    thr = rtol * max(np.abs(vals).max(initial=0.0), 0.0)
    keep = vals > thr
    if not keep.any():
        return np.zeros_like(M), 0
    inv = (vecs[:, keep] / vals[keep]) @ vecs[:, keep].T
    return inv, int(keep.sum())


def compute_g2(subsample: Dataset, spec: MomentSpec,
               mu_hat: WholeDataMoment) -> np.ndarray:
    """Moment discrepancy r^{-1} sum_k {h(Z_k) - mu_hat}.

    Shares the streaming-mean reduction with whole_data_mean, so a
    subsample equal to the whole data gives exactly zero.
    """
    return streaming_mean(moment_values(subsample, spec)) - mu_hat.mu_hat


def compute_omega_blocks(subsample: Dataset, beta_uni, spec: MomentSpec,
                         rate: float) -> OmegaBlocks:
    """Assemble the three covariance blocks on the subsample.

    `rate` is realized r over the parent n; at rate 1 the cross and moment
    blocks vanish and the correction is a no-op.
    """
    psi = efficient_score_contributions(subsample, beta_uni)
    H = moment_values(subsample, spec)
    Hc = H - streaming_mean(H)
    r = subsample.n
    fp = 1.0 - rate
    return OmegaBlocks(
        omega11=psi.T @ psi / r,
        omega12=fp * (psi.T @ Hc) / r,
        omega22=fp * (Hc.T @ Hc) / r,
        finite_pop_factor=fp,
        realized_r=r,
    )


def mcox_estimate(subsample_fit: FitResult, blocks: OmegaBlocks, g2,
                  mu_hat: WholeDataMoment | None = None) -> McoxResult:
    """Closed-form moment-assisted estimate with plug-in variance.

    Parameters
    ----------
    subsample_fit : FitResult
        Converged plain fit on the subsample; its information matrix is the
        Sigma in the correction and the sandwich.
    blocks : OmegaBlocks
    g2 : array_like of shape (q,)
    mu_hat : WholeDataMoment, optional
        Pass the whole-data average of the estimated efficient score (the
        "optimal" moment with q = p) to get the adaptive-step diagnostic
        alpha; for other moment choices leave unset and alpha is None.

    Returns
    -------
    McoxResult
        fallback=True when the moment covariance is degenerate in every
        direction (constant h, or rate 1); the estimate then equals the
        plain one and the variance is the plain subsample variance.

    Raises
    ------
    SingularInformation
        When the subsample information cannot be factored.
    """
    g2 = np.asarray(g2, dtype=np.float64).reshape(-1)
    sigma = subsample_fit.information
    beta_uni = subsample_fit.beta_hat
    r = blocks.realized_r
    L = _chol_spd(sigma)

    def sigma_solve(B):
        return scipy.linalg.cho_solve((L, True), B, check_finite=False)

    alpha = None
    if mu_hat is not None and mu_hat.mu_hat.shape[0] == sigma.shape[0]:
        o11_pinv, _ = _psd_pinv(blocks.omega11)
        c = float(mu_hat.mu_hat @ (o11_pinv @ mu_hat.mu_hat))
        alpha = min(max(c / (1.0 + c), 0.0), 1.0) if c >= 0 else 0.0

    o22_pinv, rank = _psd_pinv(blocks.omega22)
    if rank == 0:
        return McoxResult(
            beta_mcox=beta_uni.copy(),
            beta_uni=beta_uni,
            variance=subsample_fit.variance,
            alpha=alpha,
            g2_norm=float(np.linalg.norm(g2)),
            fallback=True,
        )

    correction = sigma_solve(blocks.omega12 @ (o22_pinv @ g2))
    middle = blocks.omega11 - blocks.omega12 @ o22_pinv @ blocks.omega12.T
    half = sigma_solve(middle)
    variance = sigma_solve(half.T) / r
    variance = (variance + variance.T) / 2.0
    return McoxResult(
        beta_mcox=beta_uni - correction,
        beta_uni=beta_uni,
        variance=variance,
        alpha=alpha,
        g2_norm=float(np.linalg.norm(g2)),
        fallback=False,
    )


def oses_estimate(subsample_fit: FitResult,
                  mu_hat_psi: WholeDataMoment) -> np.ndarray:
    """One-step update beta_uni + Sigma^{-1} mu_hat.

    mu_hat_psi must be the whole-data mean of the estimated efficient
    score; the update treats it as a score evaluated at beta_uni.
    """
    L = _chol_spd(subsample_fit.information)
    return subsample_fit.beta_hat + scipy.linalg.cho_solve(
        (L, True), mu_hat_psi.mu_hat, check_finite=False)


def normal_intervals(beta, variance, level: float) -> np.ndarray:
    """beta_j +- z_{(1+level)/2} sqrt(variance_jj), rows (lower, upper).

    Raises DegenerateVariance when a diagonal entry is negative beyond
    rounding (1e-10 of the trace); tiny negative dust is clipped to zero.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    beta = np.asarray(beta, dtype=np.float64)
    diag = np.diagonal(np.asarray(variance, dtype=np.float64)).copy()
    tol = 1e-10 * max(float(np.trace(variance)), 0.0)
    if np.any(diag < -tol):
        raise DegenerateVariance(
            f"variance diagonal has negative entry {diag.min():.3e}"
        )
    diag = np.clip(diag, 0.0, None)
    z = scipy.stats.norm.ppf(0.5 * (1.0 + level))
    half = z * np.sqrt(diag)
    return np.column_stack([beta - half, beta + half])


def wald_intervals(result: McoxResult, level: float) -> np.ndarray:
    """Per-coefficient normal intervals from a non-fallback result."""
    if result.fallback:
        raise ValueError(
            "intervals are not defined for a fallback result; "
            "use the plain subsample variance directly"
        )
    return normal_intervals(result.beta_mcox, result.variance, level)
