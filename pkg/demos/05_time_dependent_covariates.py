"""Time-dependent covariate paths: storage, fitting, and the corrected
subsample estimate with the cheap parametric moment."""

import numpy as np

from momentcox import (
    CovariatePathSpec,
    Dataset,
    DgpConfig,
    MOMENT_AFT,
    SubsamplePlan,
    TIME_DEPENDENT,
    generate_dataset,
    newton_raphson_fit,
    run_pipeline,
)

# The generator stores X and a drift side by side; the path spec recombines
# them as X(t) = X + t * drift at every risk-set evaluation.
ds = generate_dataset(DgpConfig(n=4000, covariate=TIME_DEPENDENT, seed=3))
print(f"stored feature block: {ds.static_dim} columns, "
      f"model dimension p={ds.p}")
print("X(0)   row 0:", np.round(ds.covariates_at(0.0)[0], 3))
print("X(1.5) row 0:", np.round(ds.covariates_at(1.5)[0], 3))

fit = newton_raphson_fit(ds)
print(f"\nwhole-data fit ({fit.n_iter} steps):", np.round(fit.beta_hat, 3))

# Same machinery drives user-supplied paths: 4 stored columns under
# combine mode "1,t" pair up into p=2 linear-in-time covariates,
# X(t) = B1 + t*B2.
spec = CovariatePathSpec.parse("poly:combine:1,t")
rng = np.random.default_rng(0)
feats = rng.standard_normal((500, 4))
y = rng.exponential(1.0, 500)
delta = (rng.random(500) < 0.7).astype(int)
custom = Dataset(y, delta, feats, path=spec)
print("\ncustom linear-path fit (p=2):",
      np.round(newton_raphson_fit(custom).beta_hat, 3))

# Estimating the optimal moment on time-dependent data costs O(n * r0); the
# parametric stand-in (a Weibull accelerated failure time score, fitted on
# the pilot, evaluated at X(0)) costs O(n) and keeps most of the benefit.
# One draw proves nothing, of course: on this dataset the correction beats
# the plain subsample fit in roughly three quarters of the draws, and on
# average (see 03_replication_study.py).
plan = SubsamplePlan.for_data(ds.n, 400, seed=0)
out = run_pipeline(ds, plan, moments=(MOMENT_AFT,), with_whole=True)
beta0 = np.array([0.2, 0.2, 0.1, 0.1, 0.1])
for name, beta in (("uni", out.fit_uni.beta_hat),
                   ("mcox-aft", out.mcox[MOMENT_AFT].beta_mcox),
                   ("whole", out.whole.beta_hat)):
    print(f"{name:<9} ||err|| = {np.linalg.norm(beta - beta0):.4f}")
