import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from momentcox.coxph import (
    breslow_baseline,
    efficient_score_contributions,
    information,
    log_partial_likelihood,
    martingale_residuals,
    newton_raphson_fit,
    risk_sums,
    score,
    score_reference,
)
from momentcox.data import Dataset
from momentcox.exceptions import EmptyRiskSet, SingularInformation, TooFewEvents
from momentcox.simulate import (
    TIME_DEPENDENT,
    TIME_INDEPENDENT,
    DgpConfig,
    generate_dataset,
)

BETA0 = np.array([0.2, 0.2, 0.1, 0.1, 0.1])


def random_instance(rng, n=40, p=3, tie_decimals=None, td=False):
    cfg = DgpConfig(n=n, p=p, beta0=np.full(p, 0.15),
                    covariate=TIME_DEPENDENT if td else TIME_INDEPENDENT,
                    seed=int(rng.integers(2**31)))
    ds = generate_dataset(cfg)
    if tie_decimals is None:
        return ds
    # rounding times forces ties; keep them strictly positive
    y = np.maximum(np.round(ds.y, tie_decimals), 10.0**-tie_decimals)
    return Dataset(y, ds.delta, ds.features, path=ds.path)


def fd_gradient(f, beta, step=1e-5):
    g = np.empty_like(beta)
    for j in range(beta.size):
        e = np.zeros_like(beta)
        e[j] = step
        g[j] = (f(beta + e) - f(beta - e)) / (2 * step)
    return g


# -- risk sums ---------------------------------------------------------------


def test_risk_sums_single_subject():
    ds = Dataset([2.0], [1], [[1.5, -0.5]])
    rs = risk_sums(ds, [0.0, 0.0], 1.0)
    assert rs.s0 == 1.0
    assert np.allclose(rs.s1, [1.5, -0.5])
    assert np.allclose(rs.s2, np.outer([1.5, -0.5], [1.5, -0.5]))


def test_risk_sums_two_subject_hand_value(two_subject):
    rs = risk_sums(two_subject, [0.0], 0.5)
    assert rs.s0 == 1.0
    assert rs.s1[0] == 0.5


def test_risk_sums_t_zero_beta_zero_is_one(ti_small):
    assert risk_sums(ti_small, np.zeros(5), 0.0, order=0).s0 == 1.0


def test_risk_sums_conditional_covariance_psd(ti_small):
    beta = np.full(5, 0.3)
    for t in (0.1, 0.5, 1.2):
        rs = risk_sums(ti_small, beta, t)
        cov = rs.s2 - np.outer(rs.s1, rs.s1) / rs.s0
        assert np.linalg.eigvalsh(cov).min() >= -1e-10 * np.trace(cov)


def test_risk_sums_beyond_last_time_raises(ti_small):
    with pytest.raises(EmptyRiskSet):
        risk_sums(ti_small, np.zeros(5), float(ti_small.y.max()) + 1.0)


# -- likelihood, score, information ------------------------------------------


def test_loglik_no_events_is_zero():
    ds = Dataset([1.0, 2.0], [0, 0], [[1.0], [0.0]])
    assert log_partial_likelihood(ds, [0.7]) == 0.0


def test_loglik_single_subject_zero_beta():
    ds = Dataset([1.0], [1], [[3.0]])
    assert log_partial_likelihood(ds, [0.0]) == 0.0


def test_loglik_two_subject_hand_value(two_subject):
    # event 1: 1*1 - log(e^1 + e^0); event 2: 0 - log(1); average of the two
    want = 0.5 * (1.0 - np.log(np.e + 1.0))
    assert log_partial_likelihood(two_subject, [1.0]) == pytest.approx(want, abs=1e-14)


def test_score_single_subject_is_zero():
    ds = Dataset([1.0], [1], [[3.0]])
    assert score(ds, [0.4])[0] == 0.0


def test_score_two_subject_hand_value(two_subject):
    # risk-set means are 1/2 then 0, so the score is ((1-1/2)+(0-0))/2
    assert score(two_subject, [0.0])[0] == pytest.approx(0.25, abs=1e-15)


def test_information_two_subject_hand_value(two_subject):
    assert information(two_subject, [0.0])[0, 0] == pytest.approx(0.125, abs=1e-15)


def test_information_single_subject_is_zero():
    ds = Dataset([1.0], [1], [[3.0]])
    assert information(ds, [0.4])[0, 0] == 0.0


def test_score_matches_fd_gradient():
    rng = np.random.default_rng(42)
    for k in range(8):
        ds = random_instance(rng, n=30 + k, p=3, tie_decimals=1 if k % 2 else None)
        beta = rng.normal(scale=0.3, size=3)
        got = score(ds, beta)
        want = fd_gradient(lambda b: log_partial_likelihood(ds, b), beta)
        assert np.abs(got - want).max() < 1e-4


def test_information_matches_fd_hessian():
    rng = np.random.default_rng(43)
    for k in range(6):
        ds = random_instance(rng, n=35, p=2, td=bool(k % 2))
        beta = rng.normal(scale=0.3, size=2)
        got = information(ds, beta)
        want = -np.array([fd_gradient(lambda b: score(ds, b)[j], beta)
                          for j in range(2)])
        assert np.abs(got - want).max() < 1e-4


def test_information_symmetric_psd(ti_small, td_small):
    for ds in (ti_small, td_small):
        info = information(ds, np.full(ds.p, 0.2))
        assert np.allclose(info, info.T)
        assert np.linalg.eigvalsh(info).min() >= -1e-10 * np.trace(info)


def test_ti_and_td_engines_agree(ti_small):
    """A path with zero time-slope forces the time-dependent code path but
    is mathematically constant, so it must reproduce the closed-form
    time-independent computation."""
    from momentcox.data import CovariatePathSpec

    spec = CovariatePathSpec.parse("poly:combine:1,t")
    padded = np.hstack([ti_small.features, np.zeros_like(ti_small.features)])
    td = Dataset(ti_small.y, ti_small.delta, padded, path=spec)
    beta = np.linspace(-0.2, 0.3, 5)
    assert log_partial_likelihood(td, beta) == pytest.approx(
        log_partial_likelihood(ti_small, beta), abs=1e-12)
    assert np.allclose(score(td, beta), score(ti_small, beta), atol=1e-12)
    assert np.allclose(information(td, beta), information(ti_small, beta),
                       atol=1e-12)


# -- solver ------------------------------------------------------------------


def test_fit_recovers_beta0_within_3se():
    ds = generate_dataset(DgpConfig(n=10_000, covariate=TIME_INDEPENDENT, seed=21))
    fit = newton_raphson_fit(ds)
    assert fit.converged
    se = np.sqrt(np.diagonal(fit.variance))
    assert np.all(np.abs(fit.beta_hat - BETA0) <= 3 * se)


def test_fit_matches_derivative_free_oracle():
    rng = np.random.default_rng(7)
    for k in range(5):
        ds = random_instance(rng, n=100, p=3, tie_decimals=1 if k % 2 else None)
        fit = newton_raphson_fit(ds)
        res = minimize(lambda b: -log_partial_likelihood(ds, b), np.zeros(3),
                       method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-13,
                                "maxiter": 4000, "maxfev": 4000})
        assert np.abs(fit.beta_hat - res.x).max() <= 1e-6


def test_fit_at_optimum_returns_immediately():
    ds = generate_dataset(DgpConfig(n=500, covariate=TIME_INDEPENDENT, seed=3))
    fit = newton_raphson_fit(ds)
    again = newton_raphson_fit(ds, init=fit.beta_hat)
    assert again.n_iter <= 1
    assert np.abs(again.beta_hat - fit.beta_hat).max() < 1e-10


def test_fit_no_events_raises():
    ds = Dataset([1.0, 2.0], [0, 0], [[1.0], [0.0]])
    with pytest.raises(TooFewEvents):
        newton_raphson_fit(ds)


def test_fit_collinear_raises_singular():
    y = np.linspace(1, 2, 20)
    x = np.linspace(-1, 1, 20)
    ds = Dataset(y, np.ones(20, dtype=int), np.column_stack([x, 2 * x]))
    with pytest.raises(SingularInformation):
        newton_raphson_fit(ds)


def test_fit_not_converged_is_returned_not_raised(ti_small):
    fit = newton_raphson_fit(ti_small, max_iter=1)
    assert not fit.converged
    assert fit.n_iter == 1


def test_fit_permutation_invariant(ti_small):
    rng = np.random.default_rng(0)
    perm = rng.permutation(ti_small.n)
    shuffled = Dataset(ti_small.y[perm], ti_small.delta[perm],
                       ti_small.features[perm])
    a = newton_raphson_fit(ti_small)
    b = newton_raphson_fit(shuffled)
    assert np.abs(a.beta_hat - b.beta_hat).max() <= 1e-10


def test_fit_column_scaling(ti_small):
    scaled_feats = ti_small.features.copy()
    scaled_feats[:, 2] *= 10.0
    scaled = Dataset(ti_small.y, ti_small.delta, scaled_feats)
    a = newton_raphson_fit(ti_small)
    b = newton_raphson_fit(scaled)
    assert b.beta_hat[2] == pytest.approx(a.beta_hat[2] / 10.0, rel=1e-8)
    keep = [0, 1, 3, 4]
    assert np.allclose(b.beta_hat[keep], a.beta_hat[keep], rtol=1e-8)


def test_converged_score_norm_below_tol(ti_small):
    fit = newton_raphson_fit(ti_small, tol=1e-8)
    assert fit.final_score_norm <= 1e-8
    assert np.abs(score(ti_small, fit.beta_hat)).max() <= 1e-8


# -- baseline hazard and residuals -------------------------------------------


def test_breslow_single_event_increment():
    ds = Dataset([1.0, 2.0, 3.0], [1, 0, 0], [[0.0], [0.0], [0.0]])
    base = breslow_baseline(ds, [0.0])
    assert base.times.tolist() == [1.0]
    assert base.increments[0] == pytest.approx(1.0 / 3.0)


def test_breslow_tied_events_share_increment():
    ds = Dataset([1.0, 1.0, 2.0, 3.0], [1, 1, 0, 0], [[0.0]] * 4)
    base = breslow_baseline(ds, [0.0])
    assert base.times.tolist() == [1.0]
    assert base.increments[0] == pytest.approx(2.0 / 4.0)


def test_breslow_tracks_unit_baseline_hazard():
    ds = generate_dataset(DgpConfig(n=10_000, covariate=TIME_INDEPENDENT, seed=31))
    base = breslow_baseline(ds, BETA0)
    t_last = float(base.times[-1])
    assert float(base.cumulative_at(t_last)) == pytest.approx(t_last, rel=0.05)


def test_breslow_increments_positive_times_increasing(td_small):
    fit = newton_raphson_fit(td_small)
    base = breslow_baseline(td_small, fit.beta_hat)
    assert np.all(np.diff(base.times) > 0)
    assert np.all(base.increments > 0)


def test_martingale_residuals_sum_to_zero(ti_small, td_small):
    for ds in (ti_small, td_small):
        fit = newton_raphson_fit(ds)
        base = breslow_baseline(ds, fit.beta_hat)
        res = martingale_residuals(ds, fit.beta_hat, base)
        assert abs(res.sum()) <= 1e-10 * np.abs(res).sum()


def test_martingale_residual_simple_cases():
    ds = Dataset([1.0], [1], [[2.0]])
    base = breslow_baseline(ds, [0.3])
    assert martingale_residuals(ds, [0.3], base)[0] == pytest.approx(0.0, abs=1e-14)

    ds2 = Dataset([0.5, 1.0, 2.0], [0, 1, 1], [[0.0], [0.0], [0.0]])
    base2 = breslow_baseline(ds2, [0.0])
    res2 = martingale_residuals(ds2, [0.0], base2)
    # censored before the first event time: no compensator mass
    assert res2[0] == 0.0


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1),
       st.integers(min_value=3, max_value=14))
def test_martingale_sum_identity_random(seed, n):
    rng = np.random.default_rng(seed)
    y = np.round(rng.exponential(size=n), 1) + 0.1
    delta = rng.integers(0, 2, size=n)
    if delta.sum() == 0:
        delta[0] = 1
    ds = Dataset(y, delta, rng.normal(size=(n, 2)))
    beta = rng.normal(scale=0.4, size=2)
    base = breslow_baseline(ds, beta)
    res = martingale_residuals(ds, beta, base)
    assert abs(res.sum()) <= 1e-10 * max(np.abs(res).sum(), 1.0)


# -- efficient score contributions -------------------------------------------


def test_score_contribution_columns_sum_to_n_score(ti_small, td_small):
    for ds in (ti_small, td_small):
        beta = np.full(ds.p, 0.15)
        psi = efficient_score_contributions(ds, beta)
        want = ds.n * score(ds, beta)
        scale = max(np.abs(want).max(), 1.0)
        assert np.abs(psi.sum(axis=0) - want).max() <= 1e-8 * scale


def test_score_contribution_single_subject_zero():
    ds = Dataset([1.0], [1], [[2.0]])
    assert np.allclose(efficient_score_contributions(ds, [0.5]), 0.0)


def test_score_contributions_at_fit_sum_to_zero(ti_small):
    fit = newton_raphson_fit(ti_small, tol=1e-10)
    psi = efficient_score_contributions(ti_small, fit.beta_hat)
    assert np.abs(psi.sum(axis=0)).max() <= ti_small.n * 1e-10


def test_risk_sums_approach_reference_with_n(big_reference):
    """Against frozen 10^6-sample curves, the max risk-sum error over a
    time grid should roughly halve when n quadruples."""
    ref_ds, _ = big_reference
    grid = np.quantile(ref_ds.y, np.linspace(0.05, 0.9, 9))
    ref = [risk_sums(ref_ds, BETA0, float(t), order=1) for t in grid]

    def max_err(n, seed):
        ds = generate_dataset(DgpConfig(n=n, covariate=TIME_INDEPENDENT, seed=seed))
        worst = 0.0
        for t, rr in zip(grid, ref):
            rs = risk_sums(ds, BETA0, float(t), order=1)
            worst = max(worst, abs(rs.s0 - rr.s0),
                        float(np.abs(rs.s1 - rr.s1).max()))
        return worst

    reps = 30
    err_small = np.mean([max_err(2000, 5000 + i) for i in range(reps)])
    err_large = np.mean([max_err(8000, 6000 + i) for i in range(reps)])
    ratio = err_small / err_large
    assert 2.0 / 1.5 <= ratio <= 2.0 * 1.5


def test_score_reference_matches_breslow(ti_small):
    beta = np.full(5, 0.1)
    ref = score_reference(ti_small, beta)
    base = breslow_baseline(ti_small, beta)
    assert np.array_equal(ref.times, base.times)
    assert np.allclose(ref.increments, base.increments)
