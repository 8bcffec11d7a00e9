"""One replication of the subsample-and-correct workflow.

The order of phases matters: the plain subsample fit comes first because
its estimate is what the moment constructions freeze. Phase wall times are
collected under the four keys pilot, moment_pass, subsample_fit and
correction (plus whole_fit when the whole-data estimate is requested).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .coxph import FitResult, newton_raphson_fit
from .data import Dataset
from .mcox import (
    McoxResult,
    compute_g2,
    compute_omega_blocks,
    mcox_estimate,
    oses_estimate,
)
from .moments import (
    MomentSpec,
    WholeDataMoment,
    build_aft_moment,
    build_optimal_moment,
    whole_data_mean,
)
from .subsampling import (
    SubsampleIndex,
    SubsamplePlan,
    draw_pilot,
    fit_uniform,
    subset,
)

MOMENT_OPT = "opt"
MOMENT_AFT = "aft"
MOMENT_FIXED = "fixed"


@dataclass
class PipelineOutput:
    fit_uni: FitResult
    index: SubsampleIndex
    pilot_index: SubsampleIndex | None
    mcox: dict[str, McoxResult]
    mu_hats: dict[str, WholeDataMoment]
    oses: np.ndarray | None
    whole: FitResult | None
    timings_ms: dict[str, float] = field(default_factory=dict)


def run_pipeline(dataset: Dataset, plan: SubsamplePlan,
                 moments: tuple[str, ...] = (MOMENT_OPT,),
                 with_oses: bool = False,
                 with_whole: bool = False,
                 fixed_moment: MomentSpec | None = None) -> PipelineOutput:
    """Subsample fit, moment construction, whole-data pass, correction.

    Parameters
    ----------
    dataset : Dataset
    plan : SubsamplePlan
    moments : tuple of {"opt", "aft", "fixed"}
        Which corrected estimates to produce. All share one pilot draw.
        May be empty for the plain subsample fit alone.
    with_oses : bool
        Also compute the one-step baseline; forces the "opt" moment
        machinery since it needs the efficient-score average.
    with_whole : bool
        Also fit the whole data (for variance-ratio studies).
    fixed_moment : MomentSpec, optional
        Pre-built moment used for the "fixed" entry; no pilot involved.

    Notes
    -----
    The one-step baseline and the adaptive-step diagnostic consume the
    whole-data moment average of the "opt" spec, so requesting either adds
    its cost even if only "aft" estimates are wanted.
    """
    moments = tuple(moments)
    for m in moments:
        if m not in (MOMENT_OPT, MOMENT_AFT, MOMENT_FIXED):
            raise ValueError(f"unknown moment name {m!r}")
    if MOMENT_FIXED in moments and fixed_moment is None:
        raise ValueError("moment 'fixed' requested without fixed_moment")
    timings: dict[str, float] = {
        "pilot": 0.0, "moment_pass": 0.0,
        "subsample_fit": 0.0, "correction": 0.0,
    }

    t0 = time.perf_counter()
    fit_uni, idx = fit_uniform(dataset, plan)
    sub_ds = subset(dataset, idx)
    timings["subsample_fit"] = (time.perf_counter() - t0) * 1e3

    need_opt = with_oses or MOMENT_OPT in moments
    specs: dict[str, MomentSpec] = {}
    pilot_index = None
    t0 = time.perf_counter()
    if need_opt or MOMENT_AFT in moments:
        pilot_index = draw_pilot(dataset.n, plan)
        pilot = subset(dataset, pilot_index)
        if need_opt:
            specs[MOMENT_OPT] = build_optimal_moment(pilot, fit_uni.beta_hat)
        if MOMENT_AFT in moments:
            specs[MOMENT_AFT] = build_aft_moment(pilot)
    if MOMENT_FIXED in moments:
        specs[MOMENT_FIXED] = fixed_moment
    timings["pilot"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    mu_hats = {name: whole_data_mean(dataset, spec)
               for name, spec in specs.items()}
    timings["moment_pass"] = (time.perf_counter() - t0) * 1e3

    rate = idx.realized_size / dataset.n
    t0 = time.perf_counter()
    results: dict[str, McoxResult] = {}
    for name in moments:
        spec = specs[name]
        mu = mu_hats[name]
        g2 = compute_g2(sub_ds, spec, mu)
        blocks = compute_omega_blocks(sub_ds, fit_uni.beta_hat, spec, rate)
        diag_mu = mu if name == MOMENT_OPT else None
        results[name] = mcox_estimate(fit_uni, blocks, g2, mu_hat=diag_mu)
    oses = oses_estimate(fit_uni, mu_hats[MOMENT_OPT]) if with_oses else None
    timings["correction"] = (time.perf_counter() - t0) * 1e3

    whole = None
    if with_whole:
        t0 = time.perf_counter()
        whole = newton_raphson_fit(dataset)
        timings["whole_fit"] = (time.perf_counter() - t0) * 1e3

    return PipelineOutput(
        fit_uni=fit_uni,
        index=idx,
        pilot_index=pilot_index,
        mcox=results,
        mu_hats=mu_hats,
        oses=oses,
        whole=whole,
        timings_ms=timings,
    )
