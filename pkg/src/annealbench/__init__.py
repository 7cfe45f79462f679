"""Benchmarking and scaling analysis for annealing-style Ising solvers."""
from .exceptions import (
    AnnealBenchError,
    ConfigError,
    DataError,
    InsufficientDataError,
    InvalidArgumentError,
    RefusalToFitError,
    SizeExceededError,
    UnresolvedReferenceError,
)
from .instances import (
    CouplingDist,
    GroundTruth,
    IsingProblem,
    ProblemClass,
    brute_force_ground,
    cut_from_energy,
    energy,
    gen_maxcut,
    gen_sk,
)
from .metrics import (
    PostprocComparison,
    SuccessEstimate,
    TTSValue,
    best_batch,
    decade_growth_factor,
    estimate_success,
    hardness_report,
    normalize_gap,
    postproc_speedup,
    tts,
)
from .scaling import (
    BoundaryFlag,
    Family,
    FitStatus,
    ScalingModelSelector,
    ScalingRegressor,
    SuccessDecayRegressor,
    TTSSurface,
    detect_fake_speedup,
    evaluate_fit,
    fit_scaling_model,
    fit_success_model,
    fixed_t_curves,
    lower_envelope,
    t_p_curve,
)
from .solvers import (
    NoisyMeanFieldAnnealing,
    RunRecord,
    SimulatedAnnealing,
    Solver,
    SweepPlan,
    nmfa_cim,
    run_sweep,
    simulated_annealing,
)

__version__ = "0.1.0"

__all__ = [
    "AnnealBenchError",
    "best_batch",
    "BoundaryFlag",
    "brute_force_ground",
    "ConfigError",
    "CouplingDist",
    "cut_from_energy",
    "DataError",
    "decade_growth_factor",
    "detect_fake_speedup",
    "energy",
    "estimate_success",
    "evaluate_fit",
    "Family",
    "fit_scaling_model",
    "fit_success_model",
    "FitStatus",
    "fixed_t_curves",
    "gen_maxcut",
    "gen_sk",
    "GroundTruth",
    "hardness_report",
    "InsufficientDataError",
    "InvalidArgumentError",
    "IsingProblem",
    "lower_envelope",
    "nmfa_cim",
    "NoisyMeanFieldAnnealing",
    "normalize_gap",
    "postproc_speedup",
    "PostprocComparison",
    "ProblemClass",
    "RefusalToFitError",
    "run_sweep",
    "RunRecord",
    "ScalingModelSelector",
    "ScalingRegressor",
    "simulated_annealing",
    "SimulatedAnnealing",
    "SizeExceededError",
    "Solver",
    "SuccessDecayRegressor",
    "SuccessEstimate",
    "SweepPlan",
    "t_p_curve",
    "tts",
    "TTSSurface",
    "TTSValue",
    "UnresolvedReferenceError",
]
