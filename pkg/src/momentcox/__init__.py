"""Moment-assisted subsampling estimators for the Cox proportional hazards
model, with whole-data and uniform-subsampling baselines and a simulation
harness."""

from .coxph import (
    BaselineHazard,
    FitResult,
    RiskSums,
    ScoreReference,
    breslow_baseline,
    efficient_score_contributions,
    information,
    log_partial_likelihood,
    martingale_residuals,
    newton_raphson_fit,
    risk_sums,
    score,
    score_reference,
    score_residuals,
)
from .data import (
    CovariatePathSpec,
    Dataset,
    SurvivalRecord,
    at_risk_indices,
    evaluate_covariate,
    load_csv,
    save_csv,
)
from .exceptions import (
    DataError,
    DegenerateVariance,
    EmptyDataset,
    EmptyRiskSet,
    EmptySubsample,
    IndexOutOfRange,
    InvalidStatus,
    MissingColumn,
    MomentCoxError,
    NegativeTime,
    NonFiniteValue,
    NotConverged,
    NumericalError,
    SamplingError,
    SingularInformation,
    TooFewEvents,
)
from .bench import BenchRow, BenchTable, loglog_slope, subsample_fit_scaling, timing_benchmark
from .mcox import (
    McoxResult,
    OmegaBlocks,
    compute_g2,
    compute_omega_blocks,
    mcox_estimate,
    normal_intervals,
    oses_estimate,
    wald_intervals,
)
from .moments import (
    AftFit,
    MomentSpec,
    WholeDataMoment,
    build_aft_moment,
    build_optimal_moment,
    build_user_linear_moment,
    fit_weibull_aft,
    moment_values,
    streaming_mean,
    whole_data_mean,
)
from .pipeline import MOMENT_AFT, MOMENT_FIXED, MOMENT_OPT, PipelineOutput, run_pipeline
from .simulate import (
    EST_MCOX_AFT,
    EST_MCOX_FIXED,
    EST_MCOX_OPT,
    EST_OSES,
    EST_UNI,
    EST_WHOLE,
    ESTIMATORS,
    TIME_DEPENDENT,
    TIME_INDEPENDENT,
    DgpConfig,
    ReplicationReport,
    StudyResult,
    generate_dataset,
    run_replications,
    run_study,
    summarize_estimates,
)
from .subsampling import (
    SubsampleIndex,
    SubsamplePlan,
    default_pilot_size,
    draw_pilot,
    fit_uniform,
    poisson_subsample,
    subset,
)

__version__ = "0.1.0"
