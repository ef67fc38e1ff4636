"""Scikit-learn style estimators wrapping the fixed-point solvers.

These classes follow the sklearn covariance-estimator conventions
(``fit(X)`` on an (n_samples, n_features) array, trailing-underscore
fitted attributes, ``get_params``/``set_params`` via ``BaseEstimator``) so
the scatter estimates compose with pipelines, ``clone`` and model
selection.  The functional API in :mod:`mscatter.solver` remains the
primitive layer; everything here is a thin, validated adapter around it.
"""

import warnings

import numpy as np
from scipy.linalg import solve_triangular
from sklearn.base import BaseEstimator
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.validation import check_array, check_is_fitted

from .data import Dataset, SpdMatrix, check_admissibility, normalize_dataset
from .families import WeightFamily, get_family
from .solver import SolverConfig, solve_maronna, solve_tyler


def _build_dataset(X, normalize):
    if normalize:
        return normalize_dataset(X)
    return Dataset(X, unit_norm=False)


def _resolve_family(family, m):
    """Accept a family name, a WeightFamily, or a factory m -> WeightFamily."""
    if isinstance(family, str):
        return get_family(family, m)
    if isinstance(family, WeightFamily):
        if family.m != m:
            raise ValueError(
                f"weight family is calibrated to m={family.m} but data has m={m}")
        return family
    if callable(family):
        return family(m)
    raise ValueError(f"cannot interpret family={family!r}")


def _maybe_check_admissibility(dataset, mode):
    if mode == "none":
        return
    verdict = check_admissibility(dataset, mode=mode)
    if not verdict.verified:
        raise ValueError(
            f"samples are not in general position: subset {verdict.witness} "
            "is rank deficient")


class MaronnaScatter(BaseEstimator):
    """Robust scatter matrix via a weighted fixed-point equation.

    Parameters
    ----------
    family : str, WeightFamily or callable, default="model"
        Weight family; built-ins are "model" and "student-t".  A callable
        receives the data dimension and must return a WeightFamily.
    t : float, default=1.0
        Tail index (> 0); smaller t down-weights more aggressively and the
        t -> 0 limit is the distribution-free estimator of TylerScatter.
    tol : float, default=1e-10
        Relative Frobenius fixed-point residual at which to stop.
    max_iter : int, default=2000
        Iteration cap; exceeding it raises a ConvergenceWarning.
    init : {"identity", "sample"} or array-like, default="identity"
        Starting matrix.
    normalize : bool, default=True
        Rescale every sample to unit norm before estimating.
    admissibility : {"none", "exact", "randomized"}, default="none"
        Optional general-position check on the samples before solving.

    Attributes
    ----------
    scatter_ : ndarray of shape (n_features, n_features)
        The estimated scatter matrix.
    report_ : SolveReport
        Iteration count, final residual and convergence flag.
    n_iter_ : int
    converged_ : bool
    family_ : WeightFamily
        The resolved family actually used.
    """

    def __init__(self, family="model", t=1.0, tol=1e-10, max_iter=2000,
                 init="identity", normalize=True, admissibility="none"):
        self.family = family
        self.t = t
        self.tol = tol
        self.max_iter = max_iter
        self.init = init
        self.normalize = normalize
        self.admissibility = admissibility

    def fit(self, X, y=None):
        """Estimate the scatter matrix of X (n_samples, n_features)."""
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        if self.t <= 0:
            raise ValueError(f"t must be positive, got {self.t}")
        dataset = _build_dataset(X, self.normalize)
        _maybe_check_admissibility(dataset, self.admissibility)
        family = _resolve_family(self.family, dataset.m)
        cfg = SolverConfig(tol=self.tol, max_iter=self.max_iter, init=self.init)
        M, report = solve_maronna(dataset, family, self.t, cfg)
        if not report.converged:
            warnings.warn(
                f"fixed-point iteration did not converge in {self.max_iter} "
                f"iterations (residual {report.final_residual:.3e})",
                ConvergenceWarning)
        self.scatter_ = np.array(M.mat)
        self.report_ = report
        self.n_iter_ = report.iterations
        self.converged_ = report.converged
        self.family_ = family
        self.n_features_in_ = dataset.m
        return self

    def mahalanobis(self, X):
        """Squared Mahalanobis-type forms x^T scatter_^{-1} x per row of X."""
        check_is_fitted(self, "scatter_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return quadratic_forms_against(X, self.scatter_)


class TylerScatter(BaseEstimator):
    """Distribution-free scatter shape, normalized to trace n_features.

    The estimate is the canonical trace-m point on the ray of solutions of
    the heaviest-tailed (t = 0) fixed-point equation; it is invariant to
    per-sample rescaling, so ``normalize`` only affects reported residuals.

    Attributes
    ----------
    scatter_ : ndarray of shape (n_features, n_features)
        The trace-m shape estimate.
    report_ : SolveReport
    n_iter_ : int
    converged_ : bool
    """

    def __init__(self, tol=1e-10, max_iter=2000, init="identity",
                 normalize=True, admissibility="none"):
        self.tol = tol
        self.max_iter = max_iter
        self.init = init
        self.normalize = normalize
        self.admissibility = admissibility

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        dataset = _build_dataset(X, self.normalize)
        _maybe_check_admissibility(dataset, self.admissibility)
        cfg = SolverConfig(tol=self.tol, max_iter=self.max_iter, init=self.init)
        P, report = solve_tyler(dataset, cfg)
        if not report.converged:
            warnings.warn(
                f"fixed-point iteration did not converge in {self.max_iter} "
                f"iterations (residual {report.final_residual:.3e})",
                ConvergenceWarning)
        self.scatter_ = np.array(P.mat)
        self.report_ = report
        self.n_iter_ = report.iterations
        self.converged_ = report.converged
        self.n_features_in_ = dataset.m
        return self

    def mahalanobis(self, X):
        """Squared Mahalanobis-type forms x^T scatter_^{-1} x per row of X."""
        check_is_fitted(self, "scatter_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return quadratic_forms_against(X, self.scatter_)


def quadratic_forms_against(X, scatter):
    """q_i = x_i^T scatter^{-1} x_i per row of X, via triangular solves."""
    X = np.asarray(X, dtype=np.float64)
    M = scatter if isinstance(scatter, SpdMatrix) else SpdMatrix(scatter)
    Z = solve_triangular(M.chol, X.T, lower=True, check_finite=False)
    return np.einsum("ij,ij->j", Z, Z)
