"""Command-line interface.

Subcommands: fit (whole-data partial likelihood), mcox (subsample +
moment correction), simulate (replication study), bench (timing grid).
Data comes from a CSV (--data with column flags) or from the built-in
generator (--n with --dgp); exactly one source must be given.

Exit codes: 0 success, 1 input or usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import bench as bench_mod
from . import reporting, simulate
from .coxph import newton_raphson_fit
from .data import CovariatePathSpec, load_csv
from .exceptions import DataError, MomentCoxError, NumericalError
from .moments import build_user_linear_moment
from .pipeline import MOMENT_AFT, MOMENT_FIXED, MOMENT_OPT, run_pipeline
from .subsampling import SubsamplePlan

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERICAL = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract reserves 2 for
    numerical failures, so remap to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def _add_data_flags(p):
    p.add_argument("--data", help="CSV file with a header row")
    p.add_argument("--time", default="time", help="time column name")
    p.add_argument("--status", default="status", help="0/1 status column name")
    p.add_argument("--features", help="comma-separated feature column names")
    p.add_argument("--path", default=None,
                   help="covariate path: 'constant' or 'poly:MODE:b1,b2'")
    p.add_argument("--n", type=int, help="generate a dataset of this size")
    p.add_argument("--dgp", choices=("ti", "td"), default="ti",
                   help="generator flavor when --n is used")


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="momentcox",
                     description="Moment-assisted subsampling for the Cox model")
    subs = parser.add_subparsers(dest="command", parser_class=_Parser)

    p_fit = subs.add_parser("fit", help="whole-data partial likelihood fit")
    _add_data_flags(p_fit)
    _add_common(p_fit)
    p_fit.add_argument("--max-iter", type=int, default=50)
    p_fit.add_argument("--tol", type=float, default=1e-8)

    p_mcox = subs.add_parser("mcox", help="subsample fit with moment correction")
    _add_data_flags(p_mcox)
    _add_common(p_mcox)
    p_mcox.add_argument("--r", type=int, required=True,
                        help="expected subsample size")
    p_mcox.add_argument("--r0", type=int, default=None,
                        help="pilot size (default ceil(r^(2/3) log r))")
    p_mcox.add_argument("--moment", default="opt",
                        help="opt | aft | linear:FILE (CSV matrix)")
    p_mcox.add_argument("--with-oses", action="store_true",
                        help="also report the one-step baseline")
    p_mcox.add_argument("--level", type=float, default=0.95,
                        help="confidence level for intervals")

    p_sim = subs.add_parser("simulate", help="Monte Carlo replication study")
    _add_common(p_sim)
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--dgp", choices=("ti", "td"), default="ti")
    p_sim.add_argument("--r", type=int, default=500)
    p_sim.add_argument("--r0", type=int, default=None)
    p_sim.add_argument("--grid", default=None,
                       help="comma-separated r values; overrides --r")
    p_sim.add_argument("--reps", type=int, default=200)
    p_sim.add_argument("--estimators", default="uni,mcox-opt,oses",
                       help=f"subset of {','.join(simulate.ESTIMATORS)}")

    p_bench = subs.add_parser("bench", help="timing benchmark over an n grid")
    _add_common(p_bench)
    p_bench.add_argument("--grid", required=True,
                         help="comma-separated dataset sizes")
    p_bench.add_argument("--r", type=int, default=500)
    p_bench.add_argument("--r0", type=int, default=None)
    p_bench.add_argument("--dgp", choices=("ti", "td"), default="ti")
    p_bench.add_argument("--reps", type=int, default=5)
    p_bench.add_argument("--estimators", default="mcox-aft")
    return parser


def _covariate_mode(flag: str) -> str:
    return (simulate.TIME_DEPENDENT if flag == "td"
            else simulate.TIME_INDEPENDENT)


def _load_dataset(args):
    if (args.data is None) == (args.n is None):
        raise DataError("exactly one data source: --data FILE or --n SIZE")
    if args.data is not None:
        if not args.features:
            raise DataError("--features is required with --data")
        spec = CovariatePathSpec.parse(args.path) if args.path else None
        return load_csv(args.data, time=args.time, status=args.status,
                        features=args.features.split(","), path_spec=spec)
    cfg = simulate.DgpConfig(n=args.n, covariate=_covariate_mode(args.dgp),
                             seed=args.seed)
    return simulate.generate_dataset(cfg)


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok]
    except ValueError as e:
        raise DataError(f"bad integer list {text!r}") from e


def cmd_fit(args) -> int:
    dataset = _load_dataset(args)
    t0 = time.perf_counter()
    fit = newton_raphson_fit(dataset, tol=args.tol, max_iter=args.max_iter)
    wall = (time.perf_counter() - t0) * 1e3
    payload = reporting.fit_result_payload(fit, wall, dataset.n)
    reporting.write_json(os.path.join(args.out, "result.json"), payload)
    if not fit.converged:
        print(f"did not converge in {fit.n_iter} iterations "
              f"(score norm {fit.final_score_norm:.3e})", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def _parse_moment(text: str):
    """Returns (pipeline moment name, fixed MomentSpec or None)."""
    if text == "opt":
        return MOMENT_OPT, None
    if text == "aft":
        return MOMENT_AFT, None
    if text.startswith("linear:"):
        path = text[len("linear:"):]
        try:
            matrix = np.loadtxt(path, delimiter=",", ndmin=2)
        except OSError as e:
            raise DataError(f"cannot read moment matrix {path!r}: {e}") from e
        return MOMENT_FIXED, build_user_linear_moment(matrix)
    raise DataError(f"unknown moment {text!r}; use opt, aft or linear:FILE")


def cmd_mcox(args) -> int:
    dataset = _load_dataset(args)
    if args.r >= dataset.n:
        print(f"r={args.r} is not below n={dataset.n}; the subsample is the "
              "whole data and the correction degenerates", file=sys.stderr)
    moment, fixed = _parse_moment(args.moment)
    plan = SubsamplePlan.for_data(dataset.n, args.r, seed=args.seed,
                                  r0=args.r0)
    out = run_pipeline(dataset, plan, moments=(moment,),
                       with_oses=args.with_oses, fixed_moment=fixed)
    name = "linear" if fixed is not None else moment
    payload = reporting.mcox_result_payload(out, moment, dataset.n,
                                            level=args.level)
    payload["moment"] = name
    reporting.write_json(os.path.join(args.out, "result.json"), payload)
    if payload.get("warning"):
        print(payload["warning"], file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = simulate.DgpConfig(n=args.n, covariate=_covariate_mode(args.dgp),
                             seed=args.seed)
    estimators = tuple(args.estimators.split(","))
    rs = _parse_int_list(args.grid) if args.grid else [args.r]
    studies = []
    for r in rs:
        studies.append(simulate.run_study(
            cfg, estimators, r=r, n_reps=args.reps,
            r0=args.r0, threads=args.threads))
    payload = reporting.simulate_summary_payload(studies)
    reporting.write_json(os.path.join(args.out, "result.json"), payload)
    reporting.write_report_csv(os.path.join(args.out, "report.csv"),
                               payload["rows"], reporting.SIM_CSV_COLUMNS)
    reporting.write_plots_gp(os.path.join(args.out, "plots.gp"),
                             "report.csv", estimators)
    for st in studies:
        if st.n_failed:
            print(f"r={st.r}: {st.n_failed} replication(s) failed",
                  file=sys.stderr)
    return EXIT_OK


def cmd_bench(args) -> int:
    ns = _parse_int_list(args.grid)
    covariate = _covariate_mode(args.dgp)
    configs = [simulate.DgpConfig(n=n, covariate=covariate, seed=args.seed)
               for n in ns]
    estimators = tuple(args.estimators.split(","))
    for est in estimators:
        if est not in simulate.ESTIMATORS:
            raise DataError(f"unknown estimator {est!r}")
    table = bench_mod.timing_benchmark(configs, r=args.r,
                                       estimators=estimators,
                                       reps=args.reps, r0=args.r0,
                                       plan_seed=args.seed)
    payload = reporting.bench_summary_payload(table, covariate)
    reporting.write_json(os.path.join(args.out, "result.json"), payload)
    reporting.write_report_csv(os.path.join(args.out, "report.csv"),
                               payload["rows"], reporting.BENCH_CSV_COLUMNS)
    return EXIT_OK


_COMMANDS = {
    "fit": cmd_fit,
    "mcox": cmd_mcox,
    "simulate": cmd_simulate,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_INPUT
    try:
        return _COMMANDS[args.command](args)
    except DataError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except MomentCoxError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"invalid argument: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
