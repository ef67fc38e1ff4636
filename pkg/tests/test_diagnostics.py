import json

import numpy as np
import pytest

from mscatter import (SolverConfig, SpdMatrix, eval_B, eval_H, g,
                      gradient_identity_residual, hessian_quadratic_form,
                      log_B, log_H, make_model_family, make_student_t_family,
                      normalize_dataset, quadratic_forms,
                      run_diagnostic_suite, solve_maronna)
from mscatter.diagnostics import (fixed_point_residual, format_report_table,
                                  random_spd, reports_to_json)

from conftest import gaussian_dataset


class TestFunctionals:
    def test_frame_H_is_one(self, frame_dataset):
        # q_i = 1 at M = I and h(1, 1) = 1 for the model family, det I = 1.
        f = make_model_family(2)
        assert eval_H(frame_dataset, f, 1.0, SpdMatrix.identity(2)) == pytest.approx(1.0, abs=1e-12)

    def test_frame_B_is_one(self, frame_dataset):
        assert eval_B(frame_dataset, SpdMatrix.identity(2)) == pytest.approx(1.0, abs=1e-12)

    def test_log_linear_consistency(self):
        d = gaussian_dataset(3, 10, seed=0)
        f = make_model_family(3)
        rng = np.random.default_rng(1)
        M = random_spd(3, rng, log_eig_range=(-0.5, 0.5))
        lh = log_H(d, f, 0.7, M)
        assert eval_H(d, f, 0.7, M) == pytest.approx(np.exp(lh), rel=1e-12)
        lb = log_B(d, M)
        assert eval_B(d, M) == pytest.approx(np.exp(lb), rel=1e-12)

    def test_H_maximized_at_solution(self):
        # The solution is the unique maximum of H(t, .); random SPD
        # perturbations can only decrease it.
        d = gaussian_dataset(4, 16, seed=2)
        f = make_student_t_family(4)
        t = 0.6
        M, rep = solve_maronna(d, f, t, SolverConfig(tol=1e-12))
        assert rep.converged
        base = log_H(d, f, t, M)
        rng = np.random.default_rng(3)
        for _ in range(100):
            E = rng.standard_normal((4, 4))
            E = 0.5 * (E + E.T)
            E *= rng.uniform(1e-3, 0.3) * np.linalg.norm(M.mat) / np.linalg.norm(E)
            try:
                other = log_H(d, f, t, SpdMatrix(M.mat + E))
            except Exception:
                continue
            assert other <= base + 1e-10

    def test_H_dominated_by_B(self):
        # Holds for every family thanks to the max-1 normalization of g.
        for f in (make_model_family(3), make_student_t_family(3)):
            d = gaussian_dataset(3, 12, seed=4)
            rng = np.random.default_rng(5)
            for _ in range(100):
                M = random_spd(3, rng)
                for t in (0.1, 1.0):
                    assert log_H(d, f, t, M) <= log_B(d, M) + 1e-10

    def test_product_identity(self):
        # H / B = prod g(t, q_i)^m, in log domain to 1e-10.
        d = gaussian_dataset(4, 14, seed=6)
        f = make_student_t_family(4)
        rng = np.random.default_rng(7)
        for _ in range(20):
            M = random_spd(4, rng)
            t = float(rng.uniform(0.05, 2.0))
            q = quadratic_forms(d, M)
            gap = log_H(d, f, t, M) - log_B(d, M)
            expected = f.m * float(np.sum(np.log(g(f, t, q))))
            assert gap == pytest.approx(expected, abs=1e-10)

    def test_B_scale_invariance(self):
        d = gaussian_dataset(5, 20, seed=8)
        rng = np.random.default_rng(9)
        M = random_spd(5, rng)
        ref = log_B(d, M)
        for c in (1e-3, 1.0, 1e3, 0.1, 7.0):
            assert abs(log_B(d, M.scaled(c)) - ref) < 1e-10

    def test_B_decays_toward_boundary(self):
        # Shrinking one eigenvalue toward zero sends B to zero.
        d = gaussian_dataset(3, 9, seed=10)
        eigvals = np.array([1.0, 1.0, 1.0])
        vals = []
        for lam in (1.0, 1e-2, 1e-4, 1e-6):
            eigvals[0] = lam
            vals.append(log_B(d, SpdMatrix(np.diag(eigvals))))
        assert all(a > b for a, b in zip(vals, vals[1:]))


class TestGradientIdentity:
    def test_random_matrices_m3(self):
        d = gaussian_dataset(3, 12, seed=11)
        f = make_model_family(3)
        rng = np.random.default_rng(12)
        for _ in range(20):
            M = random_spd(3, rng, log_eig_range=(-1, 1))
            t = float(rng.uniform(0.1, 2.0))
            assert gradient_identity_residual(d, f, t, M) < 1e-4

    def test_vanishes_at_solution(self):
        d = gaussian_dataset(3, 12, seed=13)
        f = make_student_t_family(3)
        M, rep = solve_maronna(d, f, 0.5, SolverConfig(tol=1e-12))
        assert rep.converged
        assert gradient_identity_residual(d, f, 0.5, M) < 1e-4

    def test_fd_gradient_norm_vanishes_at_solution(self):
        # The finite-difference gradient of log H at a solution is tiny
        # relative to the natural gradient scale N ||M^{-1}||.
        from mscatter.diagnostics import _fd_log_gradient
        d = gaussian_dataset(4, 16, seed=30)
        f = make_model_family(4)
        M, rep = solve_maronna(d, f, 0.7, SolverConfig(tol=1e-12))
        assert rep.converged
        G = _fd_log_gradient(d, f, 0.7, M, 1e-6 * np.linalg.norm(M.mat))
        scale = d.n * np.linalg.norm(np.linalg.inv(M.mat))
        assert np.linalg.norm(G) < 1e-5 * scale

    def test_rotation_equivariance(self):
        # Rotating data and matrix together leaves the residual unchanged.
        d = gaussian_dataset(3, 12, seed=14)
        f = make_model_family(3)
        rng = np.random.default_rng(15)
        M = random_spd(3, rng)
        Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        d_rot = normalize_dataset(d.samples @ Q)
        M_rot = SpdMatrix(Q.T @ M.mat @ Q)
        r1 = gradient_identity_residual(d, f, 0.8, M)
        r2 = gradient_identity_residual(d_rot, f, 0.8, M_rot)
        assert abs(r1 - r2) < 1e-4


class TestHessianForm:
    def _solved(self, seed=16, m=4, t=0.7):
        d = gaussian_dataset(m, 4 * m, seed=seed)
        f = make_student_t_family(m)
        M, rep = solve_maronna(d, f, t, SolverConfig(tol=1e-12))
        assert rep.converged
        return d, f, t, M

    def test_zero_direction(self):
        d, f, t, M = self._solved()
        assert hessian_quadratic_form(d, f, t, M, np.zeros((4, 4))) == 0.0

    def test_negative_definite(self):
        d, f, t, M = self._solved()
        rng = np.random.default_rng(17)
        for _ in range(100):
            Q = rng.standard_normal((4, 4))
            Q = Q + Q.T
            assert hessian_quadratic_form(d, f, t, M, Q, normalized=True) < 0.0
            assert hessian_quadratic_form(d, f, t, M, Q) < 0.0

    def test_matches_second_order_fd(self):
        from mscatter import log_H
        d, f, t, M = self._solved(seed=18, m=3)
        rng = np.random.default_rng(19)
        for _ in range(5):
            Q = rng.standard_normal((3, 3))
            Q = 0.5 * (Q + Q.T)
            Q *= np.linalg.norm(M.mat) / np.linalg.norm(Q)
            val_norm = hessian_quadratic_form(d, f, t, M, Q, normalized=True)
            s = np.sqrt(2e-4 / (d.n * abs(val_norm)))
            base = log_H(d, f, t, M)
            dp = log_H(d, f, t, SpdMatrix(M.mat + s * Q)) - base
            dm = log_H(d, f, t, SpdMatrix(M.mat - s * Q)) - base
            fd = (np.exp(dp) + np.exp(dm) - 2.0) / s**2
            assert fd / d.n == pytest.approx(val_norm, rel=0.05)

    def test_gate_rejects_non_solutions(self):
        d, f, t, M = self._solved(seed=20)
        corrupted = SpdMatrix(M.mat + 0.2 * np.eye(4) * np.linalg.norm(M.mat))
        assert fixed_point_residual(d, f, t, corrupted) > 1e-6
        with pytest.raises(ValueError, match="not a solution"):
            hessian_quadratic_form(d, f, t, corrupted, np.eye(4))

    def test_rejects_asymmetric_direction(self):
        d, f, t, M = self._solved(seed=21)
        Q = np.triu(np.ones((4, 4)))
        with pytest.raises(ValueError, match="symmetric"):
            hessian_quadratic_form(d, f, t, M, Q)


class TestSuite:
    def test_frame_model_all_pass(self, frame_dataset):
        reports = run_diagnostic_suite(frame_dataset, make_model_family(2), [0.5, 1.0])
        assert all(r.passed for r in reports)

    def test_student_seeded_all_pass(self, small_dataset):
        reports = run_diagnostic_suite(small_dataset, make_student_t_family(5),
                                       [0.1, 1.0], n_hessian=10, n_bound=10)
        assert all(r.passed for r in reports)
        names = {r.name for r in reports}
        assert "eigenvalue_bracket" in names

    def test_json_and_table_output(self, frame_dataset):
        reports = run_diagnostic_suite(frame_dataset, make_model_family(2), [1.0],
                                       n_hessian=5, n_bound=5)
        payload = json.loads(reports_to_json(reports))
        assert isinstance(payload, list) and payload
        assert {"name", "passed", "worst_case", "details"} <= set(payload[0])
        table = format_report_table(reports)
        assert "pass" in table
