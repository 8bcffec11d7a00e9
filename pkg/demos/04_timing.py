"""How the estimators' wall time grows with the dataset.

The corrected estimators at fixed r should grow linearly in n (the whole
data is only touched by one averaging pass), while the whole-data fit on
time-dependent paths re-evaluates covariates per event time and grows much
faster.
"""

from momentcox import (
    DgpConfig,
    EST_MCOX_AFT,
    EST_MCOX_OPT,
    EST_WHOLE,
    TIME_DEPENDENT,
    timing_benchmark,
)


def show(table):
    for row in table.rows:
        print(f"  {row.estimator:<10} n={row.n:>7}  {row.median_ms:9.1f} ms")


if __name__ == "__main__":
    configs = [DgpConfig(n=n, seed=0) for n in (100_000, 200_000, 400_000)]
    table = timing_benchmark(configs, r=500,
                             estimators=(EST_MCOX_OPT, EST_MCOX_AFT), reps=3)
    print("time-independent, r=500:")
    show(table)
    for est in (EST_MCOX_OPT, EST_MCOX_AFT):
        print(f"  log-log slope {est}: {table.slope(est):.2f}")

    configs = [DgpConfig(n=n, covariate=TIME_DEPENDENT, seed=0)
               for n in (1000, 2000, 4000)]
    table = timing_benchmark(configs, r=200, estimators=(EST_WHOLE,), reps=3)
    print("\ntime-dependent whole-data fit:")
    show(table)
    print(f"  log-log slope: {table.slope(EST_WHOLE):.2f}")
