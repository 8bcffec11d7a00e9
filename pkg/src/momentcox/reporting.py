"""Serialization of results: JSON records, CSV report tables, plot scripts.

JSON payloads carry a schema_version and validate against the schema files
shipped under momentcox/schemas/. Every writer sorts keys and uses a fixed
layout so that reruns under the same seed produce byte-identical files,
timing fields aside.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .coxph import FitResult
from .mcox import normal_intervals
from .pipeline import PipelineOutput
from .simulate import StudyResult, summarize_estimates

SCHEMA_VERSION = 1
_TIMING_KEYS = ("pilot", "moment_pass", "subsample_fit", "correction")

SIM_CSV_COLUMNS = ("estimator", "n", "r", "n_reps", "n_failed",
                   "nb", "nse", "mse", "log_mse_ratio_uni", "mean_time_ms")
BENCH_CSV_COLUMNS = ("estimator", "n", "r", "median_ms",
                     "pilot_ms", "moment_pass_ms", "subsample_fit_ms",
                     "correction_ms")


def _listify(x):
    return np.asarray(x, dtype=np.float64).tolist()


def write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def fit_result_payload(fit: FitResult, wall_ms: float, n: int) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": "fit",
        "beta": _listify(fit.beta_hat),
        "se": _listify(np.sqrt(np.clip(np.diagonal(fit.variance), 0.0, None))),
        "variance": [_listify(row) for row in fit.variance],
        "loglik": float(fit.loglik),
        "n_iter": int(fit.n_iter),
        "converged": bool(fit.converged),
        "final_score_norm": float(fit.final_score_norm),
        "n": int(n),
        "wall_time_ms": float(wall_ms),
    }


def mcox_result_payload(output: PipelineOutput, moment: str, n: int,
                        level: float | None = None) -> dict:
    """The corrected-estimate record: estimates, variance, diagnostics,
    per-phase timings. Interval bounds are included when a level is given
    and the run did not fall back."""
    res = output.mcox[moment]
    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": "mcox",
        "moment": moment,
        "beta_uni": _listify(res.beta_uni),
        "beta_mcox": _listify(res.beta_mcox),
        "variance": [_listify(row) for row in res.variance],
        "g2_norm": float(res.g2_norm),
        "fallback": bool(res.fallback),
        "n": int(n),
        "r_realized": int(output.index.realized_size),
        "r_pilot_realized": (int(output.pilot_index.realized_size)
                             if output.pilot_index is not None else None),
        "timings_ms": {k: float(output.timings_ms.get(k, 0.0))
                       for k in _TIMING_KEYS},
    }
    if res.alpha is not None:
        payload["alpha"] = float(res.alpha)
    if output.oses is not None:
        payload["beta_oses"] = _listify(output.oses)
    if res.fallback:
        payload["warning"] = (
            "moment covariance degenerate; corrected estimate equals the "
            "plain subsample estimate"
        )
    elif level is not None:
        ints = normal_intervals(res.beta_mcox, res.variance, level)
        payload["level"] = float(level)
        payload["intervals"] = [_listify(row) for row in ints]
    return payload


def study_rows(study: StudyResult) -> list[dict]:
    """One CSV/JSON row per estimator from a replication study."""
    beta0 = study.config.beta
    rows = []
    mses = {}
    for name in study.estimators:
        nb, nse, mse = summarize_estimates(study.estimates[name], beta0)
        mses[name] = mse
        per_rep_sq = np.sum((study.estimates[name] - beta0) ** 2, axis=1)
        m = per_rep_sq.shape[0]
        rows.append({
            "estimator": name,
            "n": study.config.n,
            "r": study.r,
            "n_reps": m,
            "n_failed": study.n_failed,
            "nb": nb,
            "nse": nse,
            "mse": mse,
            "mse_mc_se": float(per_rep_sq.std(ddof=1) / np.sqrt(m)),
            "mean_time_ms": float(study.times_ms[name].mean()),
        })
    base = mses.get("uni")
    for row in rows:
        if base is not None and base > 0 and row["mse"] > 0:
            row["log_mse_ratio_uni"] = float(np.log(base / row["mse"]))
    return rows


def write_report_csv(path, rows, columns) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            out = []
            for col in columns:
                val = row.get(col, "")
                if isinstance(val, float):
                    out.append(repr(val))
                else:
                    out.append(val)
            writer.writerow(out)


def simulate_summary_payload(studies: list[StudyResult]) -> dict:
    """JSON summary across an r sweep: config echo plus all report rows."""
    cfg = studies[0].config
    return {
        "schema_version": SCHEMA_VERSION,
        "command": "simulate",
        "config": {
            "n": cfg.n, "p": cfg.p, "beta0": list(cfg.beta0),
            "covariate": cfg.covariate, "t_df": cfg.t_df,
            "ar_rho": cfg.ar_rho, "eps_var": cfg.eps_var,
            "c0": cfg.c0, "seed": cfg.seed,
        },
        "rows": [row for st in studies for row in study_rows(st)],
    }


_EXPECTED_SLOPES = {
    # (estimator, covariate) -> inclusive slope window from the cost model;
    # None means unbounded on that side
    ("mcox-opt", "time_independent"): (0.75, 1.25),
    ("mcox-aft", "time_independent"): (0.75, 1.25),
    ("whole", "time_dependent"): (1.7, None),
}


def bench_rows(table) -> list[dict]:
    rows = []
    for row in table.rows:
        entry = {
            "estimator": row.estimator,
            "n": row.n,
            "r": row.r,
            "median_ms": row.median_ms,
        }
        for phase in _TIMING_KEYS:
            if phase in row.phase_ms:
                entry[f"{phase}_ms"] = row.phase_ms[phase]
        rows.append(entry)
    return rows


def bench_summary_payload(table, covariate: str) -> dict:
    """Slope table with a pass flag where a cost-model window is known."""
    estimators = sorted({row.estimator for row in table.rows})
    slopes = []
    for est in estimators:
        ns, _ = table.series(est)
        entry = {"estimator": est, "slope": None, "in_expected_range": None}
        if ns.shape[0] >= 2:
            s = table.slope(est)
            entry["slope"] = s
            window = _EXPECTED_SLOPES.get((est, covariate))
            if window is not None:
                lo, hi = window
                entry["in_expected_range"] = bool(
                    s >= lo and (hi is None or s <= hi))
                entry["expected"] = [lo, hi]
        slopes.append(entry)
    return {
        "schema_version": SCHEMA_VERSION,
        "command": "bench",
        "covariate": covariate,
        "slopes": slopes,
        "rows": bench_rows(table),
    }


def write_plots_gp(path, csv_name: str, estimators, metric_cols=None) -> None:
    """Gnuplot script drawing NB/NSE and log MSE ratio panels from the CSV.

    Rows are filtered per estimator with strcol, so the script works on
    the report file as written, no preprocessing.
    """
    metric_cols = metric_cols or {"nb": 6, "nse": 7, "log_mse_ratio_uni": 9}
    lines = [
        "# panels over subsample size r from the replication report",
        "set datafile separator comma",
        "set key outside",
        "set logscale x",
        'set xlabel "expected subsample size r"',
        "set terminal pngcairo size 900,600",
    ]
    for metric, col in metric_cols.items():
        lines.append(f'set output "{metric}.png"')
        lines.append(f'set ylabel "{metric}"')
        plots = []
        for est in estimators:
            plots.append(
                f'"{csv_name}" every ::1 using 3:(strcol(1) eq "{est}" ? '
                f'column({col}) : 1/0) with linespoints title "{est}"'
            )
        lines.append("plot " + ", \\\n     ".join(plots))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
