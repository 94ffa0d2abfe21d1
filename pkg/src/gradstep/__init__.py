"""Adaptive step-size rules for stochastic gradient methods.

The package covers oracle-corrected and capped Polyak-type step rules,
gradient-diversity scalings, a minibatch optimization loop with optional
momentum, spectral analysis helpers for linear models, and a CLI for
generating problems, running experiments, and checking the convergence
guarantees.
"""

from .problems import (
    BatchStats,
    FiniteSumProblem,
    KIND_LEAST_SQUARES,
    KIND_LOGISTIC,
    OptimumInfo,
    OptimumUnavailableError,
    attach_optimum,
    batch_stats,
    distance_sq_to_solution,
    full_gradient,
    full_value,
    generate_consistent_linear_system,
    generate_logistic_problem,
    load_problem,
    optimum_info_exact,
    per_sample_gradient,
    per_sample_value,
    perturb_targets,
    save_problem,
    two_quadratic_1d,
    with_exact_optimum,
)
from .rng import Xoshiro256, derive_seed
from .stepsizes import (
    CAP_MODES,
    DivergingScalingError,
    ETA_KINDS,
    MissingOracleError,
    RULE_KINDS,
    StepDecision,
    StepRule,
    UndefinedStepError,
    adjusted_gradient_diversity,
    alig_gamma,
    grad_scaling,
    plain_gradient_diversity,
    sps_gamma,
    sps_max_gamma,
    stop_gamma,
    stops_gamma,
    update_cap,
)
from .optimizer import (
    CapState,
    IterationRecord,
    MomentumSchedule,
    MomentumState,
    RunConfig,
    TRAJECTORY_HEADER,
    Trajectory,
    gsgm_step,
    initial_point,
    momentum_step,
    read_trajectory_csv,
    run,
    sample_batch,
    write_trajectory_csv,
)
from .analysis import (
    GramSpectrum,
    NeighborhoodBounds,
    REPORT_HEADER,
    ReportRow,
    SpectralConstants,
    auto_eta,
    contraction_report,
    eigenvector_start,
    gram_spectrum,
    improvement_factor,
    jacobi_eigh,
    neighborhood_bounds,
    power_iteration_top,
    print_report_summary,
    rate_fit,
    scag_reference_step,
    spectral_constants,
    write_report_csv,
)

__version__ = "0.1.0"

__all__ = [
    "BatchStats",
    "FiniteSumProblem",
    "KIND_LEAST_SQUARES",
    "KIND_LOGISTIC",
    "OptimumInfo",
    "OptimumUnavailableError",
    "attach_optimum",
    "batch_stats",
    "distance_sq_to_solution",
    "full_gradient",
    "full_value",
    "generate_consistent_linear_system",
    "generate_logistic_problem",
    "load_problem",
    "optimum_info_exact",
    "per_sample_gradient",
    "per_sample_value",
    "perturb_targets",
    "save_problem",
    "two_quadratic_1d",
    "with_exact_optimum",
    "Xoshiro256",
    "derive_seed",
    "CAP_MODES",
    "DivergingScalingError",
    "ETA_KINDS",
    "MissingOracleError",
    "RULE_KINDS",
    "StepDecision",
    "StepRule",
    "UndefinedStepError",
    "adjusted_gradient_diversity",
    "alig_gamma",
    "grad_scaling",
    "plain_gradient_diversity",
    "sps_gamma",
    "sps_max_gamma",
    "stop_gamma",
    "stops_gamma",
    "update_cap",
    "CapState",
    "IterationRecord",
    "MomentumSchedule",
    "MomentumState",
    "RunConfig",
    "TRAJECTORY_HEADER",
    "Trajectory",
    "gsgm_step",
    "initial_point",
    "momentum_step",
    "read_trajectory_csv",
    "run",
    "sample_batch",
    "write_trajectory_csv",
    "GramSpectrum",
    "NeighborhoodBounds",
    "REPORT_HEADER",
    "ReportRow",
    "SpectralConstants",
    "auto_eta",
    "contraction_report",
    "eigenvector_start",
    "gram_spectrum",
    "improvement_factor",
    "jacobi_eigh",
    "neighborhood_bounds",
    "power_iteration_top",
    "print_report_summary",
    "rate_fit",
    "scag_reference_step",
    "spectral_constants",
    "write_report_csv",
]
