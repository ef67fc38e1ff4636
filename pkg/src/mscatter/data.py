"""Sample families, SPD matrices and general-position checks.

The estimators in this package operate on a fixed set of N direction
vectors in R^m.  This module provides the two value types everything else
is built on (:class:`Dataset`, :class:`SpdMatrix`), the normalization and
general-position (admissibility) checks those types promise, and the two
kernels shared by every solver: quadratic forms against an SPD matrix and
weighted outer-product averages.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla


class NotPositiveDefiniteError(ValueError):
    """A matrix required to be SPD failed its Cholesky factorization."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class SpdMatrix:
    """Symmetric positive-definite matrix with a cached Cholesky factor.

    Symmetry is enforced on construction by mirroring the lower triangle,
    so ``mat[i, j] == mat[j, i]`` holds exactly.  The factorization is
    computed lazily, once, and the entries are write-protected afterwards;
    instances are safe to share between workers.
    """

    __slots__ = ("_mat", "_chol")

    def __init__(self, entries, _chol=None):
        arr = np.asarray(entries, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("matrix entries must be finite")
        lower = np.tril(arr)
        sym = lower + np.tril(arr, -1).T
        sym.setflags(write=False)
        self._mat = sym
        self._chol = _chol

    @classmethod
    def identity(cls, m):
        return cls(np.eye(m))

    @property
    def m(self):
        return self._mat.shape[0]

    @property
    def mat(self):
        """The entries as a read-only (m, m) ndarray."""
        return self._mat

    @property
    def chol(self):
        """Lower-triangular Cholesky factor L with ``L @ L.T == mat``."""
        if self._chol is None:
            try:
                L = np.linalg.cholesky(self._mat)
            except np.linalg.LinAlgError as exc:
                raise NotPositiveDefiniteError(
                    "Cholesky factorization failed: matrix is not positive definite"
                ) from exc
            L.setflags(write=False)
            self._chol = L
        return self._chol

    def logdet(self):
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    def trace(self):
        return float(np.trace(self._mat))

    def eigenvalues(self):
        return np.linalg.eigvalsh(self._mat)

    def scaled(self, c):
        """Return ``c * self`` (c > 0), reusing the cached factor."""
        if c <= 0:
            raise ValueError("scale factor must be positive")
        chol = None if self._chol is None else math.sqrt(c) * self._chol
        return SpdMatrix(c * self._mat, _chol=chol)

    def __repr__(self):
        return f"SpdMatrix(m={self.m})"


@dataclass(frozen=True)
class AdmissibilityVerdict:
    """Outcome of a general-position check over size-m sample subsets."""

    status: str                 # "verified" or "violated"
    witness: tuple | None       # indices of one rank-deficient subset
    mode: str                   # "exact" or "randomized"
    n_subsets_checked: int
    exhaustive: bool            # True when every subset was tested

    @property
    def verified(self):
        return self.status == "verified"


class Dataset:
    """An ordered family of N sample vectors in R^m with N > m.

    The sample array is write-protected after construction.  The result of
    an admissibility check is cached write-once on the instance; until a
    check runs, ``admissibility`` reads ``"unchecked"``.
    """

    __slots__ = ("_samples", "_unit_norm", "_verdict")

    def __init__(self, samples, unit_norm=False):
        arr = np.array(samples, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise ValueError(f"samples must be a 2-d array, got ndim={arr.ndim}")
        n, m = arr.shape
        if n <= m:
            raise ValueError(f"need more samples than dimensions, got N={n}, m={m}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples must be finite")
        if unit_norm:
            norms = np.linalg.norm(arr, axis=1)
            if np.max(np.abs(norms - 1.0)) > 1e-12:
                raise ValueError("unit_norm=True but some samples are not unit vectors")
        arr.setflags(write=False)
        self._samples = arr
        self._unit_norm = bool(unit_norm)
        self._verdict = None

    @property
    def samples(self):
        """Read-only (N, m) array, one sample per row."""
        return self._samples

    @property
    def m(self):
        return self._samples.shape[1]

    @property
    def n(self):
        return self._samples.shape[0]

    @property
    def unit_norm(self):
        return self._unit_norm

    @property
    def aspect_ratio(self):
        """m / N, reported alongside solver results."""
        return self.m / self.n

    @property
    def admissibility(self):
        """"unchecked", or the cached :class:`AdmissibilityVerdict`."""
        return self._verdict if self._verdict is not None else "unchecked"

    def __repr__(self):
        status = self._verdict.status if self._verdict is not None else "unchecked"
        return f"Dataset(N={self.n}, m={self.m}, unit_norm={self._unit_norm}, admissibility={status})"


def normalize_dataset(raw):
    """Scale every raw vector to unit Euclidean norm and wrap as a Dataset.

    Raises ValueError naming the offending index for zero vectors, and for
    vectors of inconsistent dimension.
    """
    rows = [np.asarray(r, dtype=np.float64).ravel() for r in raw]
    if not rows:
        raise ValueError("no samples given")
    m = rows[0].size
    for i, r in enumerate(rows):
        if r.size != m:
            raise ValueError(f"sample {i} has dimension {r.size}, expected {m}")
    arr = np.vstack(rows)
    norms = np.linalg.norm(arr, axis=1)
    zero = np.nonzero(norms == 0.0)[0]
    if zero.size:
        raise ValueError(f"sample {zero[0]} has zero norm and cannot be normalized")
    return Dataset(arr / norms[:, None], unit_norm=True)


def _subset_full_rank(vectors, pivot_tol):
    # vectors: (m, m) array of subset samples as columns; rank via pivoted QR,
    # pivots compared to the largest one.
    r = sla.qr(vectors, mode="r", pivoting=True)[0]
    diag = np.abs(np.diag(r))
    if diag[0] == 0.0:
        return False
    return bool(diag[-1] > pivot_tol * diag[0])


def check_admissibility(d, mode="exact", budget=10**6, n_subsets=1000, seed=0,
                        pivot_tol=1e-10):
    """Check that every size-m subset of samples is linearly independent.

    ``mode="exact"`` enumerates all C(N, m) subsets and raises if that count
    exceeds ``budget``; ``mode="randomized"`` tests ``n_subsets`` subsets
    drawn with the given seed (falling back to full enumeration whenever
    C(N, m) <= n_subsets, which covers the N = m + 1 regime cheaply).

    The verdict is cached on the dataset; re-checking returns the cache.
    A "violated" verdict carries one witness subset of sample indices.
    """
    if d._verdict is not None:
        return d._verdict
    n, m = d.n, d.m
    total = math.comb(n, m)

    if mode == "exact":
        if total > budget:
            raise ValueError(
                f"exact admissibility check needs {total} subsets (> budget {budget}); "
                "use mode='randomized'"
            )
        subsets = itertools.combinations(range(n), m)
        exhaustive = True
    elif mode == "randomized":
        if total <= n_subsets:
            subsets = itertools.combinations(range(n), m)
            exhaustive = True
        else:
            rng = np.random.default_rng(seed)
            subsets = (tuple(np.sort(rng.choice(n, size=m, replace=False)))
                       for _ in range(n_subsets))
            exhaustive = False
    else:
        raise ValueError(f"unknown mode {mode!r}, expected 'exact' or 'randomized'")

    Y = d.samples
    checked = 0
    verdict = None
    for idx in subsets:
        checked += 1
        if not _subset_full_rank(Y[list(idx)].T, pivot_tol):
            verdict = AdmissibilityVerdict("violated", tuple(idx), mode, checked, exhaustive)
            break
    if verdict is None:
        verdict = AdmissibilityVerdict("verified", None, mode, checked, exhaustive)
    d._verdict = verdict
    return verdict


def quadratic_forms(d, M):
    """q_i = y_i^T M^{-1} y_i for every sample, via triangular solves.

    Never forms the explicit inverse: with M = L L^T, q_i = ||L^{-1} y_i||^2.
    """
    L = M.chol
    Z = sla.solve_triangular(L, d.samples.T, lower=True, check_finite=False)
    return np.einsum("ij,ij->j", Z, Z)


def weighted_scatter(d, weights):
    """(1/N) sum_i w_i y_i y_i^T as an exactly symmetric ndarray."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (d.n,):
        raise ValueError(f"weights must have shape ({d.n},), got {w.shape}")
    Y = d.samples
    S = (Y * w[:, None]).T @ Y / d.n
    return np.tril(S) + np.tril(S, -1).T


def load_dataset_csv(path, normalize=True):
    """Load a dataset from CSV: one sample per row, '#' lines ignored.

    With ``normalize=False`` the raw vectors are kept (no unit-norm
    assertion).  Malformed rows are rejected with their 1-based line number.
    """
    rows = []
    m = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            fields = text.split(",")
            try:
                values = [float(f) for f in fields]
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: could not parse row as floats")
            if m is None:
                m = len(values)
            elif len(values) != m:
                raise ValueError(
                    f"{path}: line {lineno}: expected {m} values, got {len(values)}"
                )
            rows.append(values)
    if not rows:
        raise ValueError(f"{path}: no data rows found")
    if normalize:
        return normalize_dataset(rows)
    return Dataset(np.asarray(rows), unit_norm=False)


def save_matrix_csv(M, path):
    """Write a matrix (SpdMatrix or ndarray) as CSV, one row per line."""
    arr = M.mat if isinstance(M, SpdMatrix) else np.asarray(M)
    with open(path, "w", encoding="utf-8") as fh:
        for row in arr:
            fh.write(",".join(f"{x:.17g}" for x in row))
            fh.write("\n")
