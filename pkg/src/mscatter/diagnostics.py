"""Runnable checks of the variational structure behind the solvers.

The scatter solution at tail index t is the unique maximizer of

    H(t, M) = prod_i h(t, y_i^T M^{-1} y_i)^m / det(M)^N

over SPD matrices, and H is dominated by the t-free functional B (same
formula with h(0, x) = 1/x).  This module evaluates both in log-domain
(products over N samples overflow doubles otherwise), checks the closed
form of grad H against finite differences, evaluates the Hessian quadratic
form at solutions, and bundles everything into a report suite.
"""

import json
from dataclasses import dataclass

import numpy as np

from .data import SpdMatrix, quadratic_forms, weighted_scatter
from .families import g, h, solve_xt, u_x
from .solver import SolverConfig, solve_maronna


def log_H(d, f, t, M):
    """log of the variational objective: m * sum log h(t, q_i) - N log det M."""
    q = quadratic_forms(d, M)
    return float(f.m * np.sum(np.log(h(f, t, q))) - d.n * M.logdet())


def eval_H(d, f, t, M):
    """H(t, M) in linear domain; may over/underflow, use log_H at scale."""
    return float(np.exp(log_H(d, f, t, M)))


def log_B(d, M):
    """log of the t-free dominating functional: -m * sum log q_i - N log det M."""
    q = quadratic_forms(d, M)
    return float(-d.m * np.sum(np.log(q)) - d.n * M.logdet())


def eval_B(d, M):
    return float(np.exp(log_B(d, M)))


def _sym_basis_directions(m):
    for i in range(m):
        for j in range(i, m):
            E = np.zeros((m, m))
            E[i, j] = 1.0
            E[j, i] = 1.0
            if i == j:
                E[i, i] = 1.0
            yield i, j, E


def _fd_log_gradient(d, f, t, M, step):
    """Gradient of log H in the Frobenius inner product, by central differences."""
    m = M.m
    G = np.zeros((m, m))
    base = M.mat
    for i, j, E in _sym_basis_directions(m):
        plus = log_H(d, f, t, SpdMatrix(base + step * E))
        minus = log_H(d, f, t, SpdMatrix(base - step * E))
        deriv = (plus - minus) / (2.0 * step)
        # <G, E> equals the directional derivative: E has two unit entries
        # off-diagonal, one on the diagonal.
        if i == j:
            G[i, i] = deriv
        else:
            G[i, j] = G[j, i] = deriv / 2.0
    return G


def gradient_identity_residual(d, f, t, M, step_scale=1e-6):
    """Check -M grad(H) M / (N H) == M - (1/N) sum u(t, q_i) y_i y_i^T.

    The gradient side is finite-differenced (in log-domain, which divides
    out H exactly); the right side is evaluated in closed form.  Returns
    the Frobenius norm of the difference relative to ||M||_F, so the check
    stays meaningful at solutions where both sides vanish.
    """
    step = step_scale * float(np.linalg.norm(M.mat))
    G = _fd_log_gradient(d, f, t, M, step)
    lhs = -M.mat @ G @ M.mat / d.n
    q = quadratic_forms(d, M)
    rhs = M.mat - weighted_scatter(d, f.u(t, q))
    return float(np.linalg.norm(lhs - rhs) / np.linalg.norm(M.mat))


def fixed_point_residual(d, f, t, M):
    q = quadratic_forms(d, M)
    rhs = weighted_scatter(d, f.u(t, q))
    return float(np.linalg.norm(M.mat - rhs) / np.linalg.norm(M.mat))


def hessian_quadratic_form(d, f, t, M, Q, normalized=False, residual_gate=1e-6):
    """<Q, Hess_M(Q)> of H(t, .) at a solution M, in closed form.

    Valid only where M solves the fixed-point equation (the closed form
    assumes a critical point); a substituted residual above residual_gate
    raises ValueError.  With normalized=True the value is divided by
    N * H(t, M), which preserves the sign and avoids H overflow.
    """
    res = fixed_point_residual(d, f, t, M)
    if res > residual_gate:
        raise ValueError(
            f"M is not a solution (residual {res:.3e} > gate {residual_gate:.0e}); "
            "the Hessian closed form only holds at critical points")
    Q = np.asarray(Q, dtype=np.float64)
    if not np.allclose(Q, Q.T):
        raise ValueError("Q must be symmetric")
    q = quadratic_forms(d, M)
    Minv_Q = np.linalg.solve(M.mat, Q)
    A = np.linalg.solve(M.mat, Minv_Q.T).T          # M^{-1} Q M^{-1}
    quad = float(np.sum(Q * A))                     # <Q, M^{-1} Q M^{-1}>
    forms = np.einsum("ij,jk,ik->i", d.samples, A, d.samples)
    bracket = quad + float(np.mean(u_x(f, t, q) * forms**2))
    if normalized:
        return -bracket
    return float(-d.n * eval_H(d, f, t, M) * bracket)


@dataclass
class DiagnosticReport:
    name: str
    passed: bool
    worst_case: float
    details: dict

    def to_dict(self):
        return {"name": self.name, "passed": self.passed,
                "worst_case": self.worst_case, "details": self.details}


def random_spd(m, rng, log_eig_range=(-2.0, 2.0)):
    """Random SPD matrix: random orthogonal frame, log-uniform eigenvalues."""
    A = rng.standard_normal((m, m))
    Qo, _ = np.linalg.qr(A)
    eig = 10.0 ** rng.uniform(log_eig_range[0], log_eig_range[1], size=m)
    return SpdMatrix((Qo * eig) @ Qo.T)


def run_diagnostic_suite(d, f, t_list, n_hessian=20, n_bound=20, seed=0, cfg=None):
    """Run the variational checks at every t in t_list and aggregate reports.

    Checks per t: gradient identity at M(t), Hessian negativity over random
    symmetric directions, H <= B over random SPD matrices, and unimodality
    of g at x_t.  One cross-t check asserts the eigenvalues of M(t) stay
    inside the bracket set by the largest t (margin factor 10).
    """
    cfg = cfg or SolverConfig()
    rng = np.random.default_rng(seed)
    t_list = sorted(float(t) for t in t_list)
    reports = []

    solutions = {}
    for t in t_list:
        M, rep = solve_maronna(d, f, t, cfg)
        solutions[t] = (M, rep)
        if not rep.converged:
            reports.append(DiagnosticReport(
                f"solver@t={t:g}", False, rep.final_residual,
                {"reason": "fixed-point iteration did not converge"}))

    for t in t_list:
        M, _ = solutions[t]

        res = gradient_identity_residual(d, f, t, M)
        reports.append(DiagnosticReport(
            f"gradient_identity@t={t:g}", res < 1e-4, res, {"tolerance": 1e-4}))

        worst = -np.inf
        for _ in range(n_hessian):
            Q = rng.standard_normal((d.m, d.m))
            Q = Q + Q.T
            val = hessian_quadratic_form(d, f, t, M, Q, normalized=True)
            worst = max(worst, val)
        reports.append(DiagnosticReport(
            f"hessian_negative@t={t:g}", worst < 0.0, worst,
            {"directions": n_hessian}))

        worst = -np.inf
        for _ in range(n_bound):
            R = random_spd(d.m, rng)
            gap = log_H(d, f, t, R) - log_B(d, R)
            worst = max(worst, gap)
        reports.append(DiagnosticReport(
            f"h_le_b@t={t:g}", worst <= 1e-10, worst, {"matrices": n_bound}))

        xt = solve_xt(f, t)
        vals = [g(f, t, 0.9 * xt), g(f, t, xt), g(f, t, 1.1 * xt)]
        grid = np.logspace(-2, 2, 50) * xt
        gmax = float(np.max(g(f, t, grid)))
        ok = vals[0] < vals[1] and vals[2] < vals[1] and gmax <= 1.0 + 1e-12
        reports.append(DiagnosticReport(
            f"g_max@t={t:g}", ok, gmax,
            {"g(x_t)": vals[1], "g(0.9 x_t)": vals[0], "g(1.1 x_t)": vals[2]}))

    t_max = t_list[-1]
    eig_ref = solutions[t_max][0].eigenvalues()
    lo, hi = float(eig_ref.min()) / 10.0, float(eig_ref.max()) * 10.0
    worst_lo, worst_hi = np.inf, -np.inf
    for t in t_list:
        eig = solutions[t][0].eigenvalues()
        worst_lo = min(worst_lo, float(eig.min()))
        worst_hi = max(worst_hi, float(eig.max()))
    ok = worst_lo >= lo and worst_hi <= hi
    reports.append(DiagnosticReport(
        "eigenvalue_bracket", ok, worst_hi / hi if worst_hi > hi else worst_lo / lo,
        {"bracket": (lo, hi), "observed": (worst_lo, worst_hi),
         "reference_t": t_max}))

    return reports


def reports_to_json(reports):
    return json.dumps([r.to_dict() for r in reports], indent=2, default=str)


def format_report_table(reports):
    lines = [f"{'check':<32} {'status':<6} worst_case"]
    for r in reports:
        status = "pass" if r.passed else "FAIL"
        lines.append(f"{r.name:<32} {status:<6} {r.worst_case:.6g}")
    return "\n".join(lines)
