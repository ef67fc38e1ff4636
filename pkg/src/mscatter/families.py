"""Weight-function families and their derived scalar functions.

A weight family is a map u(t, x), defined for tail index t >= 0 and
quadratic form x > 0, that down-weights outlying samples inside the scatter
fixed-point equation.  The convention u(0, x) = m/x makes t = 0 the
distribution-free (heaviest-tailed) limit.  Everything the solvers and
diagnostics need derives from u:

    v(t, x)  = x u(t, x)            (monotone reparametrization)
    v1(x)    = d/dt v(t, x) at t=0  (first-order tail expansion)
    w(t, x)  = (v(t, x) - m)/t - v1(x)   (vanishing remainder)
    x_t      = the unique root of v(t, .) = m
    h(t, x)  = exp(-(1/m) * integral of u(t, .) from x_t to x) / x_t
    g(t, x)  = x h(t, x)            (unimodal, maximum 1 at x_t)

The 1/x_t factor in h pins the maximum of g at exactly 1 for every family
(not only those with x_t = 1), which is what makes the domination bound of
the variational diagnostics family-independent and gives h(t, .) -> 1/x as
t -> 0.  Multiplying h by a constant leaves every derivative-based identity
untouched, so the choice is pure normalization.

Families may carry closed forms for any of these; numeric fallbacks
(one-sided differentiation for v1, bracketed root finding for x_t,
adaptive Simpson quadrature for h) are used otherwise, and the two are
cross-checked in the validation suite.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq


class WeightConditionError(RuntimeError):
    """A weight family violates one of the admissibility conditions on u."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to converge; carries the bad interval."""

    def __init__(self, message, interval):
        super().__init__(f"{message} on interval {interval}")
        self.interval = interval


@dataclass(frozen=True)
class WeightFamily:
    """A weight function u(t, x) for dimension m, plus optional closed forms.

    Parameters
    ----------
    m : int
        Ambient dimension the family is calibrated to (u(0, x) = m/x).
    u : callable
        (t, x) -> nonnegative weight; must broadcast over array x.
    label : str
        Display name.
    analytic_v1, analytic_w1 : callable, optional
        x -> value closed forms for the first- and second-order tail
        expansion coefficients of v.
    analytic_xt : callable, optional
        t -> the root of v(t, .) = m.
    analytic_h : callable, optional
        (t, x) -> closed form for h.
    analytic_ux : callable, optional
        (t, x) -> du/dx, used by the curvature diagnostics.
    """

    m: int
    u: Callable
    label: str
    analytic_v1: Optional[Callable] = None
    analytic_w1: Optional[Callable] = None
    analytic_xt: Optional[Callable] = None
    analytic_h: Optional[Callable] = None
    analytic_ux: Optional[Callable] = None

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("dimension m must be >= 1")


def make_model_family(m):
    """The reference family u(t, x) = m (1 + t) / (x + t).

    All derived quantities are available in closed form: v1(x) = m (1 - 1/x),
    x_t = 1 for every t, and h(t, x) = ((1 + t)/(x + t))**(1 + t).
    """
    return WeightFamily(
        m=m,
        u=lambda t, x: m * (1.0 + t) / (x + t),
        label="model",
        analytic_v1=lambda x: m * (1.0 - 1.0 / x),
        # Second t-derivative of v/2:  v(t,x) = m + t v1(x) - t^2 m (x-1)/x^2 + O(t^3).
        analytic_w1=lambda x: -m * (x - 1.0) / x**2,
        analytic_xt=lambda t: 1.0,
        analytic_h=lambda t, x: ((1.0 + t) / (x + t)) ** (1.0 + t),
        analytic_ux=lambda t, x: -m * (1.0 + t) / (x + t) ** 2,
    )


def make_student_t_family(m):
    """The Student-t MLE family u(t, x) = (m + t) / (t + x).

    Here t plays the role of the degrees of freedom: v1(x) = 1 - m/x,
    x_t = m for every t, and h(t, x) = ((m + t)/(x + t))**((m + t)/m).
    """
    return WeightFamily(
        m=m,
        u=lambda t, x: (m + t) / (t + x),
        label="student-t",
        analytic_v1=lambda x: 1.0 - m / x,
        analytic_w1=lambda x: -(x - m) / x**2,
        analytic_xt=lambda t: float(m),
        analytic_h=lambda t, x: ((m + t) / (x + t)) ** ((m + t) / m) / m,
        analytic_ux=lambda t, x: -(m + t) / (t + x) ** 2,
    )


def make_constant_family(m):
    """u(t, x) = 1: deliberately violates (U1); used to exercise validation."""
    return WeightFamily(m=m, u=lambda t, x: np.ones_like(np.asarray(x, dtype=float)),
                        label="const")


_REGISTRY = {
    "model": make_model_family,
    "student-t": make_student_t_family,
    "const": make_constant_family,
}


def get_family(name, m):
    """Look up a built-in family by name ("model", "student-t", "const")."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ValueError(
            f"unknown weight family {name!r}; available: {sorted(_REGISTRY)}"
        ) from None
    return factory(m)


def _maybe_scalar(out):
    out = np.asarray(out)
    return float(out) if out.ndim == 0 else out


def v(f, t, x):
    """v(t, x) = x u(t, x); exactly m at t = 0 by the u(0, x) = m/x convention."""
    x = np.asarray(x, dtype=np.float64)
    if t == 0:
        return _maybe_scalar(np.full_like(x, float(f.m)))
    return _maybe_scalar(x * f.u(t, x))


def v1(f, x):
    """First-order tail coefficient v1(x) = dv/dt at t = 0.

    Uses the closed form when the family provides one, otherwise a
    one-sided difference quotient (v is defined only for t >= 0) with one
    Richardson extrapolation step.
    """
    x = np.asarray(x, dtype=np.float64)
    if f.analytic_v1 is not None:
        return _maybe_scalar(f.analytic_v1(x))
    delta = 1e-7
    d1 = (v(f, delta, x) - f.m) / delta
    d2 = (v(f, delta / 2.0, x) - f.m) / (delta / 2.0)
    return _maybe_scalar(2.0 * d2 - d1)


def w(f, t, x):
    """Remainder w(t, x) = (v(t, x) - m)/t - v1(x); tends to 0 as t -> 0."""
    if t <= 0:
        raise ValueError("w is defined for t > 0")
    return _maybe_scalar((v(f, t, x) - f.m) / t - v1(f, x))


def solve_xt(f, t, tol=1e-12):
    """The unique x_t > 0 with v(t, x_t) = m, located by bracketing + Brent.

    Raises WeightConditionError when v(t, .) never exceeds m within the
    expansion cap (sup v <= m violates condition (U2)).
    """
    if t <= 0:
        raise ValueError("x_t is defined for t > 0")
    if f.analytic_xt is not None:
        return float(f.analytic_xt(t))
    m = float(f.m)
    target = lambda x: v(f, t, x) - m

    lo, hi = 1e-8, 1.0
    while target(lo) > 0.0:
        lo /= 2.0
        if lo < 1e-300:
            raise WeightConditionError("v(t, .) exceeds m at arbitrarily small x")
    while target(hi) <= 0.0:
        hi *= 2.0
        if hi > 1e12:
            raise WeightConditionError(
                f"v({t}, x) never exceeds m={m} up to x=1e12: family violates (U2)"
            )
    root = brentq(target, lo, hi, xtol=1e-15, rtol=8.9e-16)
    if abs(v(f, t, root) - m) > tol * m:
        raise WeightConditionError(f"x_t root residual above {tol * m} at t={t}")
    return float(root)


def adaptive_simpson(func, a, b, tol=1e-12, max_depth=60):
    """Integrate func over [a, b] with adaptive Simpson to absolute tol.

    Raises QuadratureError with the offending subinterval if the recursion
    exceeds max_depth levels.
    """
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b = b, a
        sign = -1.0
    fa, fb = func(a), func(b)
    mid = 0.5 * (a + b)
    fm = func(mid)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return sign * _simpson_step(func, a, fa, b, fb, mid, fm, whole, tol, max_depth)


def _simpson_step(func, a, fa, b, fb, mid, fm, whole, tol, depth):
    lm = 0.5 * (a + mid)
    rm = 0.5 * (mid + b)
    flm, frm = func(lm), func(rm)
    left = (mid - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - mid) / 6.0 * (fm + 4.0 * frm + fb)
    err = left + right - whole
    if abs(err) <= 15.0 * tol:
        return left + right + err / 15.0
    if depth <= 0:
        raise QuadratureError("adaptive Simpson did not converge", (a, b))
    return (_simpson_step(func, a, fa, mid, fm, lm, flm, left, tol / 2.0, depth - 1)
            + _simpson_step(func, mid, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1))


def h(f, t, x, quad_tol=1e-12):
    """h(t, x) = exp(-(1/m) * integral of u(t, .) from x_t to x) / x_t.

    Normalized so h(t, x_t) = 1/x_t, making max_x x h(t, x) = 1 for every
    family; h(0, x) = 1/x, the pointwise t -> 0 limit.
    """
    x_arr = np.asarray(x, dtype=np.float64)
    if np.any(x_arr <= 0.0):
        raise ValueError("h requires x > 0")
    if t == 0:
        return _maybe_scalar(1.0 / x_arr)
    if f.analytic_h is not None:
        return _maybe_scalar(f.analytic_h(t, x_arr))
    xt = solve_xt(f, t)
    integrand = lambda y: float(f.u(t, y))
    if x_arr.ndim == 0:
        return math.exp(-adaptive_simpson(integrand, xt, float(x_arr), quad_tol) / f.m) / xt
    out = np.empty_like(x_arr)
    for i, xi in np.ndenumerate(x_arr):
        out[i] = math.exp(-adaptive_simpson(integrand, xt, float(xi), quad_tol) / f.m) / xt
    return out


def g(f, t, x):
    """g(t, x) = x h(t, x); identically 1 at t = 0, maximum 1 at x = x_t."""
    x_arr = np.asarray(x, dtype=np.float64)
    return _maybe_scalar(x_arr * np.asarray(h(f, t, x_arr)))


def u_x(f, t, x):
    """du/dx, analytic when available, else a central difference with step 1e-7 x."""
    x_arr = np.asarray(x, dtype=np.float64)
    if f.analytic_ux is not None:
        return _maybe_scalar(f.analytic_ux(t, x_arr))
    step = 1e-7 * x_arr
    return _maybe_scalar((f.u(t, x_arr + step) - f.u(t, x_arr - step)) / (2.0 * step))


def default_t_grid():
    return np.logspace(-4, 0, 20)


def default_x_grid():
    return np.logspace(-3, 3, 200)


@dataclass
class ConditionCheck:
    name: str
    passed: bool
    witnesses: list = field(default_factory=list)


@dataclass
class ConditionReport:
    """Grid-based evidence for conditions (U1)-(U3) on a weight family."""

    label: str
    checks: list

    @property
    def all_passed(self):
        return all(c.passed for c in self.checks)

    def failed(self):
        return [c for c in self.checks if not c.passed]


def validate_conditions(f, t_grid=None, x_grid=None):
    """Check (U1) u decreasing, (U2) v increasing with sup > m, (U3) slopes.

    Each violated condition records the witnessing grid points (at most a
    handful, to keep reports readable).
    """
    t_grid = default_t_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    x_grid = default_x_grid() if x_grid is None else np.asarray(x_grid, dtype=float)
    m = float(f.m)
    checks = []

    # (U1): u(t, .) strictly decreasing.
    witnesses = []
    for t in t_grid:
        uu = np.asarray(f.u(t, x_grid), dtype=float)
        bad = np.nonzero(np.diff(uu) >= 0.0)[0]
        for k in bad[:3]:
            witnesses.append({"t": float(t), "x": (float(x_grid[k]), float(x_grid[k + 1]))})
    checks.append(ConditionCheck("U1: u(t,.) strictly decreasing", not witnesses, witnesses[:10]))

    # (U2): v(t, .) increasing and sup_x v(t, x) > m.
    witnesses = []
    for t in t_grid:
        vv = np.asarray(v(f, t, x_grid), dtype=float)
        bad = np.nonzero(np.diff(vv) < -1e-12 * m)[0]
        for k in bad[:3]:
            witnesses.append({"t": float(t), "x": (float(x_grid[k]), float(x_grid[k + 1])),
                              "kind": "not increasing"})
        if vv.max() <= m:
            witnesses.append({"t": float(t), "kind": "sup v <= m on grid",
                              "max_v": float(vv.max())})
    checks.append(ConditionCheck("U2: v increasing with sup > m", not witnesses, witnesses[:10]))

    # (U3): v_x > 0, v1 increasing, x_t bounded as t -> 0.
    witnesses = []
    for t in t_grid:
        step = 1e-6 * x_grid
        vx = (np.asarray(v(f, t, x_grid + step)) - np.asarray(v(f, t, x_grid - step))) / (2 * step)
        bad = np.nonzero(vx <= 0.0)[0]
        for k in bad[:3]:
            witnesses.append({"t": float(t), "x": float(x_grid[k]), "kind": "v_x <= 0"})
    vals = np.asarray(v1(f, x_grid), dtype=float)
    bad = np.nonzero(np.diff(vals) <= 0.0)[0]
    for k in bad[:3]:
        witnesses.append({"x": (float(x_grid[k]), float(x_grid[k + 1])),
                          "kind": "v1 not increasing"})
    for t in np.sort(t_grid)[:3]:
        try:
            xt = solve_xt(f, float(t))
        except WeightConditionError as exc:
            witnesses.append({"t": float(t), "kind": f"x_t undefined: {exc}"})
            continue
        if not (1e-3 <= xt <= 1e3):
            witnesses.append({"t": float(t), "x_t": xt, "kind": "x_t escapes [1e-3, 1e3]"})
    checks.append(ConditionCheck("U3: v_x > 0, v1 increasing, x_t bounded", not witnesses,
                                 witnesses[:10]))

    # Calibration sanity: x u(0, x) == m on the grid.
    u0 = np.asarray(f.u(0.0, x_grid), dtype=float) * x_grid
    worst = float(np.max(np.abs(u0 - m)))
    checks.append(ConditionCheck("u(0,x) = m/x calibration", worst <= 1e-12 * m,
                                 [] if worst <= 1e-12 * m else [{"worst": worst}]))

    return ConditionReport(f.label, checks)
