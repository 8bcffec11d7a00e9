import time

import numpy as np
import pytest
import sympy

from momentcox.coxph import newton_raphson_fit
from momentcox.data import Dataset
from momentcox.exceptions import NotConverged, TooFewEvents
from momentcox.moments import (
    build_aft_moment,
    build_optimal_moment,
    build_user_linear_moment,
    fit_weibull_aft,
    moment_values,
    streaming_mean,
    whole_data_mean,
)
from momentcox.simulate import (
    TIME_DEPENDENT,
    TIME_INDEPENDENT,
    DgpConfig,
    generate_dataset,
)
from momentcox.subsampling import SubsampleIndex, SubsamplePlan, poisson_subsample, subset


def weibull_aft_data(n, a=0.5, gamma=(0.3, -0.2), sigma=0.7, seed=0, censor_at=None):
    """log T = a + gamma'x + sigma*log(E), E ~ Exp(1) (standard
    smallest-extreme-value error)."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, len(gamma)))
    logt = a + x @ np.asarray(gamma) + sigma * np.log(rng.exponential(size=n))
    t = np.exp(logt)
    if censor_at is None:
        return Dataset(t, np.ones(n, dtype=int), x)
    c = rng.uniform(0, censor_at, size=n)
    return Dataset(np.minimum(t, c), (t < c).astype(int), x)


# -- linear moments ----------------------------------------------------------


def test_linear_identity_on_features(ti_small):
    d = ti_small.static_dim
    mat = np.hstack([np.zeros((d, 2)), np.eye(d)])
    spec = build_user_linear_moment(mat)
    assert np.array_equal(moment_values(ti_small, spec), ti_small.features)


def test_linear_zero_matrix(ti_small):
    spec = build_user_linear_moment(np.zeros((2, 2 + ti_small.static_dim)))
    assert np.all(moment_values(ti_small, spec) == 0.0)
    assert np.all(whole_data_mean(ti_small, spec).mu_hat == 0.0)


def test_linear_delta_row_gives_event_rate(ti_small):
    row = np.zeros((1, 2 + ti_small.static_dim))
    row[0, 1] = 1.0
    spec = build_user_linear_moment(row)
    mu = whole_data_mean(ti_small, spec)
    assert mu.mu_hat[0] == pytest.approx(ti_small.delta.mean())
    assert mu.n_used == ti_small.n


def test_event_rate_matches_stated_censoring():
    """The generator doc pins c0=3.275 to a 70% censoring rate, which
    would put the event-indicator mean near 0.30."""
    ds = generate_dataset(DgpConfig(n=100_000, covariate=TIME_INDEPENDENT, seed=77))
    row = np.zeros((1, 2 + ds.static_dim))
    row[0, 1] = 1.0
    mu = whole_data_mean(ds, build_user_linear_moment(row))
    assert abs(mu.mu_hat[0] - 0.30) <= 0.01


# -- estimated-optimal moment ------------------------------------------------


def test_optimal_moment_whole_data_mean_near_zero(ti_small):
    fit = newton_raphson_fit(ti_small, tol=1e-10)
    spec = build_optimal_moment(ti_small, fit.beta_hat)
    mu = whole_data_mean(ti_small, spec)
    assert np.abs(mu.mu_hat).max() <= 10 * 1e-10 * ti_small.n


def test_optimal_moment_single_event_pilot_is_zero():
    pilot = Dataset([1.0], [1], [[2.0]])
    spec = build_optimal_moment(pilot, [0.3])
    assert np.allclose(moment_values(pilot, spec), 0.0)


def test_optimal_moment_needs_events():
    pilot = Dataset([1.0, 2.0], [0, 1], [[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(TooFewEvents):
        build_optimal_moment(pilot, [0.0, 0.0])


def test_moment_evaluation_is_pure(ti_small):
    spec = build_optimal_moment(ti_small, np.full(5, 0.1))
    a = moment_values(ti_small, spec)
    b = moment_values(ti_small, spec)
    assert np.array_equal(a, b)


def test_optimal_moment_cost_linear_in_pilot_events():
    """Per-subject evaluation walks the pilot's event times, so a 4x
    bigger pilot should cost about 4x on a time-dependent dataset."""
    ds = generate_dataset(DgpConfig(n=3000, covariate=TIME_DEPENDENT, seed=50))

    def timed(r0):
        plan = SubsamplePlan.for_data(ds.n, r0, seed=1, r0=r0)
        pilot = subset(ds, poisson_subsample(ds.n, plan))
        spec = build_optimal_moment(pilot, np.zeros(ds.p))
        best = np.inf
        for _ in range(5):
            t0 = time.perf_counter()
            moment_values(ds, spec)
            best = min(best, time.perf_counter() - t0)
        return best

    ratio = timed(600) / timed(150)
    slope = np.log(ratio) / np.log(4.0)
    assert 0.7 <= slope <= 1.3


# -- Weibull AFT -------------------------------------------------------------


def test_aft_fit_recovers_parameters():
    ds = weibull_aft_data(10_000, seed=4, censor_at=8.0)
    fit = fit_weibull_aft(ds)
    assert abs(fit.intercept - 0.5) <= 0.05
    assert np.abs(fit.slopes - [0.3, -0.2]).max() <= 0.05
    assert abs(fit.scale - 0.7) <= 0.05


def test_aft_score_mean_zero_at_fit():
    ds = weibull_aft_data(2000, seed=5, censor_at=8.0)
    spec = build_aft_moment(ds)
    mu = whole_data_mean(ds, spec)
    assert np.abs(mu.mu_hat).max() <= 1e-6


def test_aft_score_matches_symbolic_derivative():
    ds = weibull_aft_data(800, seed=6)
    spec = build_aft_moment(ds)
    fit = spec.aft

    y_s, a_s, g1, g2, sig = sympy.symbols("y a g1 g2 sigma", positive=True)
    x1, x2 = sympy.symbols("x1 x2")
    w = (sympy.log(y_s) - a_s - g1 * x1 - g2 * x2) / sig
    loglik = (w - sympy.log(sig)) - sympy.exp(w)  # uncensored subject
    grad = [sympy.diff(loglik, g) for g in (g1, g2)]

    subj = Dataset([1.7], [1], [[0.4, -1.1]])
    got = moment_values(subj, spec)[0]
    env = {y_s: 1.7, x1: 0.4, x2: -1.1, a_s: fit.intercept,
           g1: fit.slopes[0], g2: fit.slopes[1], sig: fit.scale}
    want = [float(g.evalf(subs=env)) for g in grad]
    assert np.allclose(got, want, rtol=1e-10)


def test_aft_censored_score_matches_symbolic_derivative():
    ds = weibull_aft_data(800, seed=6)
    spec = build_aft_moment(ds)
    fit = spec.aft

    y_s, a_s, g1, g2, sig = sympy.symbols("y a g1 g2 sigma", positive=True)
    x1, x2 = sympy.symbols("x1 x2")
    w = (sympy.log(y_s) - a_s - g1 * x1 - g2 * x2) / sig
    loglik = -sympy.exp(w)  # censored subject keeps only the survival term
    grad = [sympy.diff(loglik, g) for g in (g1, g2)]

    subj = Dataset([0.9], [0], [[-0.3, 0.8]])
    got = moment_values(subj, spec)[0]
    env = {y_s: 0.9, x1: -0.3, x2: 0.8, a_s: fit.intercept,
           g1: fit.slopes[0], g2: fit.slopes[1], sig: fit.scale}
    want = [float(g.evalf(subs=env)) for g in grad]
    assert np.allclose(got, want, rtol=1e-10)


def test_aft_needs_enough_events():
    ds = weibull_aft_data(20, seed=7)
    few = Dataset(ds.y, np.r_[1, 1, np.zeros(18, dtype=int)], ds.features)
    with pytest.raises(TooFewEvents):
        build_aft_moment(few)


def test_aft_not_converged_carries_partial_fit():
    ds = weibull_aft_data(500, seed=8, censor_at=8.0)
    with pytest.raises(NotConverged) as err:
        fit_weibull_aft(ds, max_iter=1)
    assert err.value.result is not None
    assert err.value.result.n_iter == 1


def test_aft_moment_on_td_dataset_uses_time_zero_covariates(td_small):
    spec = build_aft_moment(td_small)
    vals = moment_values(td_small, spec)
    assert vals.shape == (td_small.n, td_small.p)
    assert np.isfinite(vals).all()


# -- whole-data pass ---------------------------------------------------------


def test_streaming_mean_matches_chunked_oracle():
    rng = np.random.default_rng(9)
    vals = rng.normal(size=(200_001, 3))
    got = streaming_mean(vals)
    # independent re-computation with the same fixed-size chunking
    chunk = 1 << 16
    partials = [vals[i:i + chunk].sum(axis=0)
                for i in range(0, len(vals), chunk)]
    want = np.sum(partials, axis=0) / len(vals)
    assert np.array_equal(got, want)


def test_whole_data_mean_deterministic(ti_small):
    spec = build_optimal_moment(ti_small, np.full(5, 0.1))
    a = whole_data_mean(ti_small, spec).mu_hat
    b = whole_data_mean(ti_small, spec).mu_hat
    assert np.array_equal(a, b)
