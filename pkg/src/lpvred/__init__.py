"""Model reduction for affine linear parameter-varying state-space models.

State-order reduction (:mod:`lpvred.sor`) shrinks ``n_x``; scheduling-
dimension reduction (:mod:`lpvred.sdr`) replaces ``p`` by fewer coordinates.
:mod:`lpvred.benchmarks` provides the test systems and
:mod:`lpvred.simulation` the self-scheduled simulations and error metrics.
"""

from .benchmarks import BENCHMARKS, build_benchmark, design_grids, design_inputs
from .errors import (AlgebraicLoopError, DimensionError, GramianInfeasibleError, InsufficientDataError,
                     NotApplicableError, ReductionError, ResourceError, StabilityError, TrainingDivergedError,
                     UndefinedMetricError)
from .model import AffineLpvSs, LfrModel, LtiSs, SchedulingMap, close_lfr, eval_model, to_lfr
from .numerics import balanced_truncation, gramians, h2_norm, hinf_norm, hsv, is_hurwitz, solve_lyapunov
from .sdr import (SDR_METHODS, SdrResult, ae_reduce, collect_scheduling, dnn_reduce, fit_reduced_matrices,
                  kpca_reduce, pca_reduce, sdrbr_reduce, tpca_reduce)
from .simulation import MetricReport, SelfScheduled, Trajectory, local_errors, nrmse, simulate
from .sor import SOR_METHODS, SorResult, lfrbr, lpvbr, ltibr, markov_parameters, moment_match, pvop

__version__ = "0.1.0"

__all__ = [
    "BENCHMARKS", "build_benchmark", "design_grids", "design_inputs", "AlgebraicLoopError", "DimensionError",
    "GramianInfeasibleError", "InsufficientDataError", "NotApplicableError", "ReductionError", "ResourceError",
    "StabilityError", "TrainingDivergedError", "UndefinedMetricError", "AffineLpvSs", "LfrModel", "LtiSs",
    "SchedulingMap", "close_lfr", "eval_model", "to_lfr", "balanced_truncation", "gramians", "h2_norm",
    "hinf_norm", "hsv", "is_hurwitz", "solve_lyapunov", "SDR_METHODS", "SdrResult", "ae_reduce",
    "collect_scheduling", "dnn_reduce", "fit_reduced_matrices", "kpca_reduce", "pca_reduce", "sdrbr_reduce",
    "tpca_reduce", "MetricReport", "SelfScheduled", "Trajectory", "local_errors", "nrmse", "simulate",
    "SOR_METHODS", "SorResult", "lfrbr", "lpvbr", "ltibr", "markov_parameters", "moment_match", "pvop",
]
