"""Robust scatter-matrix M-estimation with pluggable weight families.

Fixed-point estimators of scatter for heavy-tailed multivariate data: a
tail-indexed family of weighted estimators, the distribution-free t -> 0
limit, the scale linking the two, variational diagnostics, and a seeded
Monte-Carlo harness for convergence experiments.
"""

from .data import (AdmissibilityVerdict, Dataset, NotPositiveDefiniteError,
                   SpdMatrix, check_admissibility, load_dataset_csv,
                   normalize_dataset, quadratic_forms, save_matrix_csv,
                   weighted_scatter)
from .diagnostics import (DiagnosticReport, eval_B, eval_H,
                          gradient_identity_residual, hessian_quadratic_form,
                          log_B, log_H, run_diagnostic_suite)
from .estimators import MaronnaScatter, TylerScatter, quadratic_forms_against
from .families import (QuadratureError, WeightConditionError, WeightFamily,
                       adaptive_simpson, g, get_family, h, make_model_family,
                       make_student_t_family, solve_xt, u_x, v, v1,
                       validate_conditions, w)
from .simulate import (CurvePoint, ExperimentError, ExperimentSpec, run_curve,
                       sample_gaussian, toeplitz_covariance, write_curve_csv,
                       write_curve_svg)
from .solver import (LimitPathResult, PathPoint, SolveReport, SolverConfig,
                     limit_path, solve_maronna, solve_tyler, solve_xi,
                     tyler_map)

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityVerdict", "CurvePoint", "Dataset", "DiagnosticReport",
    "ExperimentError", "ExperimentSpec", "LimitPathResult", "MaronnaScatter",
    "NotPositiveDefiniteError", "PathPoint", "QuadratureError", "SolveReport",
    "SolverConfig", "SpdMatrix", "TylerScatter", "WeightConditionError",
    "WeightFamily", "adaptive_simpson", "check_admissibility", "eval_B",
    "eval_H", "g", "get_family", "gradient_identity_residual", "h",
    "hessian_quadratic_form", "limit_path", "load_dataset_csv", "log_B",
    "log_H", "make_model_family", "make_student_t_family",
    "normalize_dataset", "quadratic_forms", "quadratic_forms_against",
    "run_curve", "run_diagnostic_suite", "sample_gaussian", "save_matrix_csv",
    "solve_maronna", "solve_tyler", "solve_xi", "solve_xt",
    "toeplitz_covariance", "tyler_map", "u_x", "v", "v1",
    "validate_conditions", "w", "weighted_scatter", "write_curve_csv",
    "write_curve_svg",
]
