"""Wall-clock benchmarks and empirical complexity slopes.

Times the estimators over a grid of data sizes at fixed subsample size and
fits log-log slopes, the empirical counterpart of the cost claims: the
corrected subsample estimators should scale linearly in n on constant
covariate paths, while the whole-data fit on time-dependent paths pays a
risk-set re-evaluation per event time and scales roughly quadratically.

Dataset generation is excluded from all timings. Compiled kernels are
warmed up before the clock starts so first-call compilation never lands in
a measurement.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .coxph import newton_raphson_fit, score_reference
from .pipeline import MOMENT_AFT, MOMENT_OPT, run_pipeline
from .simulate import (
    EST_MCOX_AFT,
    EST_MCOX_OPT,
    EST_OSES,
    EST_UNI,
    EST_WHOLE,
    DgpConfig,
    TIME_DEPENDENT,
    generate_dataset,
)
from .subsampling import SubsamplePlan

_PHASE_KEYS = ("pilot", "moment_pass", "subsample_fit", "correction")


@dataclass(frozen=True)
class BenchRow:
    estimator: str
    n: int
    r: int
    median_ms: float
    phase_ms: dict


@dataclass
class BenchTable:
    rows: list

    def series(self, estimator: str) -> tuple[np.ndarray, np.ndarray]:
        """(n values, median ms) for one estimator, ascending n."""
        got = sorted((row.n, row.median_ms) for row in self.rows
                     if row.estimator == estimator)
        if not got:
            raise KeyError(f"no rows for estimator {estimator!r}")
        ns, ts = zip(*got)
        return np.array(ns, dtype=float), np.array(ts, dtype=float)

    def slope(self, estimator: str) -> float:
        ns, ts = self.series(estimator)
        return loglog_slope(ns, ts)


def loglog_slope(xs, ys) -> float:
    """Least-squares slope of log y against log x."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape[0] < 2:
        raise ValueError("need at least two points for a slope")
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def _warmup_kernels():
    """Trigger compilation of the time-dependent scan kernels."""
    cfg = DgpConfig(n=60, covariate=TIME_DEPENDENT, seed=0)
    ds = generate_dataset(cfg)
    fit = newton_raphson_fit(ds)
    score_reference(ds, fit.beta_hat)


def _time_estimator(dataset, estimator, r, r0, seeds):
    """Wall times (ms) and phase timings over the given plan seeds."""
    totals, phases = [], []
    for seed in seeds:
        if estimator == EST_WHOLE:
            t0 = time.perf_counter()
            newton_raphson_fit(dataset)
            ms = (time.perf_counter() - t0) * 1e3
            totals.append(ms)
            phases.append({})
            continue
        plan = SubsamplePlan.for_data(dataset.n, r, seed=seed, r0=r0)
        moments = {EST_MCOX_OPT: (MOMENT_OPT,),
                   EST_MCOX_AFT: (MOMENT_AFT,)}.get(estimator, ())
        out = run_pipeline(dataset, plan, moments=moments,
                           with_oses=estimator == EST_OSES)
        t = out.timings_ms
        if estimator == EST_UNI:
            totals.append(t["subsample_fit"])
        else:
            totals.append(sum(t[k] for k in _PHASE_KEYS))
        phases.append({k: t[k] for k in _PHASE_KEYS})
    med_phase = {}
    if phases[0]:
        med_phase = {k: float(np.median([p[k] for p in phases]))
                     for k in _PHASE_KEYS}
    return float(np.median(totals)), med_phase


def timing_benchmark(configs, r: int, estimators=(EST_MCOX_AFT,),
                     reps: int = 5, r0: int | None = None,
                     plan_seed: int = 0) -> BenchTable:
    """Median-of-reps wall times per estimator over a grid of configs.

    The configs should vary n at fixed everything else; each is generated
    once and all estimators run on the same dataset. Plan seeds vary per
    rep so the medians average over subsample draws as well as clock noise.
    """
    if any(cfg.covariate == TIME_DEPENDENT for cfg in configs):
        _warmup_kernels()
    rows = []
    for cfg in configs:
        dataset = generate_dataset(cfg)
        for est in estimators:
            seeds = [plan_seed + k for k in range(reps)]
            med, phase = _time_estimator(dataset, est, r, r0, seeds)
            rows.append(BenchRow(estimator=est, n=cfg.n, r=r,
                                 median_ms=med, phase_ms=phase))
    return BenchTable(rows=rows)


def subsample_fit_scaling(config: DgpConfig, rs, reps: int = 5,
                          plan_seed: int = 0) -> dict:
    """Median subsample-fit phase time (ms) for each r on one dataset.

    Used to check how the corrected estimator's fitting phase reacts to
    the subsample size alone.
    """
    if config.covariate == TIME_DEPENDENT:
        _warmup_kernels()
    dataset = generate_dataset(config)
    out = {}
    for r in rs:
        meds = []
        for k in range(reps):
            plan = SubsamplePlan.for_data(dataset.n, r, seed=plan_seed + k)
            res = run_pipeline(dataset, plan, moments=(MOMENT_OPT,))
            meds.append(res.timings_ms["subsample_fit"])
        out[int(r)] = float(np.median(meds))
    return out
