"""Fixed-point solvers for the weighted scatter equation and its t -> 0 limit.

For a dataset (y_i) and weight family u, the scatter estimate M(t) solves

    M = (1/N) sum_i u(t, y_i^T M^{-1} y_i) y_i y_i^T

and the t = 0 equation (weight m/x) has a ray of solutions pinned down by
the trace-m representative P.  ``solve_maronna`` and ``solve_tyler`` locate
these by fixed-point iteration; ``solve_xi`` computes the scale xi relating
the two (lim M(t) = xi * P); ``limit_path`` drives a decreasing t-grid with
warm starts to realize the limit numerically.

Iteration scheme.  Each Picard step is followed by an exact one-dimensional
rescaling of the iterate so that (1/N) sum_i v(t, q_i) = m, an identity any
solution satisfies (multiply the fixed-point equation by M^{-1} and take
the trace).  Without it, the scale component of the plain map contracts at
rate 1 - O(t) and small-t solves would need millions of iterations.  The
rescaling does not change the fixed-point set: a stationary point M = a*F(M)
obeying the trace identity forces a = 1 by the same trace argument.  On top
of this, the solvers run safeguarded Anderson mixing over the step history
(proposals are rejected unless symmetric positive definite, with fallback
to the plain step), which collapses the slowly-contracting directions that
appear when N is close to m.  Reported residuals are always plain
substituted residuals ||M - F(M)||_F / ||M||_F with F the unmodified map,
so convergence claims are independent of the acceleration scheme.
"""

import json
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import brentq

from .data import NotPositiveDefiniteError, SpdMatrix, quadratic_forms, weighted_scatter
from .families import WeightConditionError, u_x, v1

_ANDERSON_DEPTH = 8


@dataclass
class SolverConfig:
    """Iteration controls shared by all fixed-point solves."""

    tol: float = 1e-10
    max_iter: int = 2000
    init: object = "identity"   # "identity" | "sample" | SpdMatrix | ndarray
    record_trajectory: bool = False
    accelerate: bool = True     # Anderson mixing over the step history

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class SolveReport:
    """Convergence evidence for one fixed-point solve."""

    iterations: int
    final_residual: float
    converged: bool
    trajectory: list | None = None


@dataclass
class PathPoint:
    t: float
    scatter: SpdMatrix
    deviation: float
    report: SolveReport


@dataclass
class LimitPathResult:
    points: list
    tyler: SpdMatrix
    xi: float
    limit: SpdMatrix
    tyler_report: SolveReport


def _initial_matrix(d, init):
    if isinstance(init, SpdMatrix):
        return np.array(init.mat)
    if isinstance(init, np.ndarray):
        arr = np.array(init, dtype=np.float64)
        return 0.5 * (arr + arr.T)
    if init == "identity":
        return np.eye(d.m)
    if init == "sample":
        # (m/N) sum y y^T, the comparison matrix from the eigenvalue bounds.
        return weighted_scatter(d, np.full(d.n, float(d.m)))
    raise ValueError(f"unknown init {init!r}")


def _try_cholesky(M):
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return None


def _forms(L, Y):
    Z = solve_triangular(L, Y.T, lower=True, check_finite=False)
    return np.einsum("ij,ij->j", Z, Z)


def _scale_correction(f, t, q, res_scale=0.0):
    """Solve (1/N) sum_i v(t, q_i / a) = m for a > 0.

    The left side is strictly decreasing in a (v is increasing in x), so a
    Newton iteration from a = 1, safeguarded by a sign-change bracket, is
    globally convergent.  ``res_scale`` loosens the target while the outer
    iteration is far from converged; near convergence the root is polished
    to machine precision, which matters because for small t the function is
    flat (slope O(t)) and a sloppy root would inject scale noise above the
    solver tolerance.
    """
    m = float(f.m)
    n = q.size

    def psi(a):
        x = q / a
        return float(np.add.reduce(x * f.u(t, x))) / n - m

    def slope(a):
        x = q / a
        vx = f.u(t, x) + x * u_x(f, t, x)
        return -float(np.add.reduce(vx * q)) / (n * a * a)

    a = 1.0
    lo, hi = 0.0, math.inf
    target = max(1e-2 * res_scale, 4.5e-16)
    for _ in range(200):
        p = psi(a)
        if p > 0.0:
            lo = max(lo, a)
        elif p < 0.0:
            hi = min(hi, a)
        else:
            return a
        sl = slope(a)
        nxt = a - p / sl if sl < 0.0 else math.inf
        if not (lo < nxt < hi):
            if math.isinf(hi):
                nxt = 2.0 * a
            elif lo == 0.0:
                nxt = 0.5 * a
            else:
                nxt = 0.5 * (lo + hi)
        if abs(nxt - a) <= target * a:
            return nxt
        a = nxt
    if lo > 0.0 and not math.isinf(hi):
        return 0.5 * (lo + hi)
    raise WeightConditionError(
        "scale equation has no root: sup_x v(t, x) <= m (condition U2)")


class _AndersonMixer:
    """Safeguarded Anderson mixing over fixed-point step history.

    Proposes extrapolated iterates from the recent (x, G(x)) pairs via a
    Tikhonov-regularized least squares on the residual differences.  The
    caller validates proposals (symmetry is restored here, positive
    definiteness is the caller's check) and calls ``reset`` when a proposal
    is rejected, falling back to the plain step.
    """

    def __init__(self, depth=_ANDERSON_DEPTH):
        self.depth = depth
        self.xs = []
        self.gs = []

    def reset(self):
        self.xs.clear()
        self.gs.clear()

    def push(self, x, gx):
        self.xs.append(x)
        self.gs.append(gx)
        if len(self.xs) > self.depth + 1:
            self.xs.pop(0)
            self.gs.pop(0)

    def propose(self, m):
        if len(self.xs) < 2:
            return None
        F = np.stack([g - x for g, x in zip(self.gs, self.xs)], axis=1)
        dF = np.diff(F, axis=1)
        dG = np.diff(np.stack(self.gs, axis=1), axis=1)
        A = dF.T @ dF
        lam = 1e-12 * np.trace(A) / A.shape[0]
        A[np.diag_indices_from(A)] += lam if lam > 0 else 1e-30
        try:
            gamma = np.linalg.solve(A, dF.T @ F[:, -1])
        except np.linalg.LinAlgError:
            return None
        cand = self.gs[-1] - dG @ gamma
        cand = cand.reshape(m, m)
        return 0.5 * (cand + cand.T)


def solve_maronna(d, f, t, cfg=None):
    """Solve the weighted scatter equation at tail index t > 0.

    Returns (M, report) with M an SpdMatrix whose substituted fixed-point
    residual is below cfg.tol at convergence.  Raises
    NotPositiveDefiniteError (with the iteration index) if an iterate loses
    positive definiteness, which signals inadmissible data.

    The result is independent of cfg.init (the equation has a unique
    solution); this is exercised by the test suite rather than assumed.
    """
    if t <= 0:
        raise ValueError("t must be positive; use solve_tyler for the t=0 equation")
    if f.m != d.m:
        raise ValueError(f"family dimension {f.m} != dataset dimension {d.m}")
    cfg = cfg or SolverConfig()
    Y = d.samples
    n, m = d.n, d.m

    cur = _initial_matrix(d, cfg.init)
    L = _try_cholesky(cur)
    if L is None:
        raise NotPositiveDefiniteError("initial matrix is not positive definite",
                                       iteration=0)
    q = _forms(L, Y)
    mixer = _AndersonMixer() if cfg.accelerate else None
    trajectory = [] if cfg.record_trajectory else None

    res = math.inf
    for k in range(1, cfg.max_iter + 1):
        weights = f.u(t, q)
        C = (Y * weights[:, None]).T @ Y / n
        C = 0.5 * (C + C.T)
        res = float(np.linalg.norm(cur - C) / np.linalg.norm(cur))
        if trajectory is not None:
            trajectory.append(res)
        if res < cfg.tol:
            return SpdMatrix(cur, _chol=L), SolveReport(k - 1, res, True, trajectory)

        LC = _try_cholesky(C)
        if LC is None:
            raise NotPositiveDefiniteError(
                f"iterate lost positive definiteness at iteration {k}", iteration=k)
        qC = _forms(LC, Y)
        alpha = _scale_correction(f, t, qC, res_scale=res)
        nxt = alpha * C
        nxt_L = math.sqrt(alpha) * LC
        nxt_q = qC / alpha

        if mixer is not None:
            mixer.push(cur.ravel(), nxt.ravel())
            prop = mixer.propose(m)
            if prop is not None:
                Lp = _try_cholesky(prop)
                if Lp is not None:
                    cur, L, q = prop, Lp, _forms(Lp, Y)
                    continue
                mixer.reset()
        cur, L, q = nxt, nxt_L, nxt_q

    weights = f.u(t, q)
    C = (Y * weights[:, None]).T @ Y / n
    res = float(np.linalg.norm(cur - 0.5 * (C + C.T)) / np.linalg.norm(cur))
    if trajectory is not None:
        trajectory.append(res)
    return SpdMatrix(cur, _chol=L), SolveReport(cfg.max_iter, res, res < cfg.tol,
                                                trajectory)


def tyler_map(d, M):
    """One application of the t = 0 map (m/N) sum y y^T / q, un-normalized."""
    q = quadratic_forms(d, M if isinstance(M, SpdMatrix) else SpdMatrix(M))
    return weighted_scatter(d, d.m / q)


def solve_tyler(d, cfg=None):
    """Solve the t = 0 equation, returning the trace-m representative P.

    Every iterate is rescaled to trace m (the solution set is a ray, so the
    normalization picks the canonical point and keeps the iteration away
    from drift).  The reported residual is against the un-normalized map.
    """
    cfg = cfg or SolverConfig()
    Y = d.samples
    n, m = d.n, d.m

    cur = _initial_matrix(d, cfg.init)
    cur *= m / np.trace(cur)
    L = _try_cholesky(cur)
    if L is None:
        raise NotPositiveDefiniteError("initial matrix is not positive definite",
                                       iteration=0)
    q = _forms(L, Y)
    mixer = _AndersonMixer() if cfg.accelerate else None
    trajectory = [] if cfg.record_trajectory else None

    res = math.inf
    for k in range(1, cfg.max_iter + 1):
        C = (Y * (m / q)[:, None]).T @ Y / n
        C = 0.5 * (C + C.T)
        res = float(np.linalg.norm(cur - C) / np.linalg.norm(cur))
        if trajectory is not None:
            trajectory.append(res)
        if res < cfg.tol:
            return SpdMatrix(cur, _chol=L), SolveReport(k - 1, res, True, trajectory)
        nxt = C * (m / np.trace(C))

        proposed = False
        if mixer is not None:
            mixer.push(cur.ravel(), nxt.ravel())
            prop = mixer.propose(m)
            if prop is not None:
                prop *= m / np.trace(prop)
                Lp = _try_cholesky(prop)
                if Lp is not None:
                    cur, L = prop, Lp
                    q = _forms(Lp, Y)
                    proposed = True
                else:
                    mixer.reset()
        if not proposed:
            L = _try_cholesky(nxt)
            if L is None:
                raise NotPositiveDefiniteError(
                    f"iterate lost positive definiteness at iteration {k}",
                    iteration=k)
            cur = nxt
            q = _forms(L, Y)

    C = (Y * (m / q)[:, None]).T @ Y / n
    res = float(np.linalg.norm(cur - 0.5 * (C + C.T)) / np.linalg.norm(cur))
    if trajectory is not None:
        trajectory.append(res)
    return SpdMatrix(cur, _chol=L), SolveReport(cfg.max_iter, res, res < cfg.tol,
                                                trajectory)


def _v1_root(f):
    """The unique x0 > 0 with v1(x0) = 0 (v1 is increasing under (U3))."""
    lo, hi = 0.25, 1.0
    for _ in range(200):
        if v1(f, lo) < 0.0:
            break
        lo /= 4.0
    else:
        raise WeightConditionError("v1 has no sign change toward 0 (condition U3)")
    for _ in range(200):
        if v1(f, hi) > 0.0:
            break
        hi *= 4.0
        if hi > 1e12:
            raise WeightConditionError("v1 has no positive root below 1e12 (condition U3)")
    return float(brentq(lambda x: v1(f, x), lo, hi, xtol=1e-15, rtol=8.9e-16))


def solve_xi(d, f, P):
    """Solve sum_i v1(q_i / xi) = 0 for the limit scale xi > 0.

    q_i are the quadratic forms against the trace-m Tyler solution P.  The
    left side is strictly decreasing in xi, and bracketing by the range of
    q_i over the v1 root guarantees a sign change for any family obeying
    (U3); Brent's method then converges unconditionally.
    """
    q = quadratic_forms(d, P)
    x0 = _v1_root(f)

    def phi(xi):
        return float(np.sum(v1(f, q / xi)))

    lo = 0.5 * float(q.min()) / x0
    hi = 2.0 * float(q.max()) / x0
    for _ in range(60):
        if phi(lo) > 0.0:
            break
        lo /= 2.0
    else:
        raise WeightConditionError("no bracket for xi: v1 admits no usable root (U3)")
    for _ in range(60):
        if phi(hi) < 0.0:
            break
        hi *= 2.0
    else:
        raise WeightConditionError("no bracket for xi: v1 admits no usable root (U3)")

    xi = float(brentq(phi, lo, hi, xtol=1e-300, rtol=8.9e-16))
    if abs(phi(xi)) >= 1e-10 * d.n:
        raise WeightConditionError(
            f"xi root residual {abs(phi(xi)):.3e} exceeds {1e-10 * d.n:.3e}; "
            "v1 is numerically degenerate near its root")
    return xi


def limit_path(d, f, t_grid, cfg=None):
    """Solve M(t) along a strictly decreasing t-grid, warm-starting each solve.

    Computes the limit M0 = xi * P once and returns the Frobenius deviation
    ||M(t) - M0||_F per grid point alongside the solutions.
    """
    t_grid = [float(t) for t in t_grid]
    if not t_grid or any(tv <= 0 for tv in t_grid):
        raise ValueError("t_grid must be non-empty and positive")
    if any(b >= a for a, b in zip(t_grid, t_grid[1:])):
        raise ValueError("t_grid must be strictly decreasing")
    cfg = cfg or SolverConfig()

    P, tyler_report = solve_tyler(d, cfg)
    xi = solve_xi(d, f, P)
    M0 = P.scaled(xi)

    points = []
    warm = cfg.init
    for t in t_grid:
        M, report = solve_maronna(d, f, t, replace(cfg, init=warm))
        dev = float(np.linalg.norm(M.mat - M0.mat))
        points.append(PathPoint(t, M, dev, report))
        warm = M
    return LimitPathResult(points, P, xi, M0, tyler_report)


def solve_result_dict(d, t, M, report):
    """JSON-ready summary: {m, N, t, matrix (flat row-major), iterations, ...}."""
    return {
        "m": d.m,
        "N": d.n,
        "t": t,
        "matrix": [float(x) for x in M.mat.ravel()],
        "iterations": report.iterations,
        "residual": report.final_residual,
        "converged": report.converged,
    }


def save_result_json(path, d, t, M, report):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(solve_result_dict(d, t, M, report), fh, indent=2)
        fh.write("\n")
