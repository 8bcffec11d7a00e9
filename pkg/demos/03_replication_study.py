"""Monte Carlo comparison of the estimators over two subsample sizes."""

import numpy as np

from momentcox import DgpConfig, EST_MCOX_OPT, EST_OSES, EST_UNI, run_replications

cfg = DgpConfig(n=10_000, seed=0)
estimators = (EST_UNI, EST_MCOX_OPT, EST_OSES)

for r in (200, 800):
    reports = run_replications(cfg, estimators, r=r, n_reps=100,
                               base_seed=1000 + r, threads=4)
    print(f"\nn={cfg.n}, r={r}, 100 replications")
    print("estimator     nb      nse      mse     log mse ratio vs uni")
    base = next(rep.mse for rep in reports if rep.estimator == EST_UNI)
    for rep in reports:
        ratio = np.log(base / rep.mse)
        print(f"{rep.estimator:<10} {rep.nb:.4f}  {rep.nse:.4f}  "
              f"{rep.mse:.4f}   {ratio:+.3f}")
