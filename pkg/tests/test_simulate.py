import numpy as np
import pytest
from mpmath import mp, mpf

from mscatter import (CurvePoint, ExperimentError, ExperimentSpec,
                      SolverConfig, run_curve, sample_gaussian,
                      toeplitz_covariance, write_curve_csv, write_curve_svg)
from mscatter.simulate import _run_trial, format_curve_csv, trial_seed_sequence

from conftest import FRAME


def frame_sampler(spec, rng):
    return FRAME.copy()


def flaky_sampler(spec, rng):
    # Roughly 7% of trials produce a duplicated row, which fails the
    # general-position check; deterministic per trial stream.
    raw = rng.standard_normal((spec.N, spec.m))
    if rng.uniform() < 0.07:
        raw[1] = raw[0]
    return raw


def always_bad_sampler(spec, rng):
    raw = rng.standard_normal((spec.N, spec.m))
    raw[1] = raw[0]
    return raw


class TestToeplitz:
    def test_rho_zero_identity(self):
        assert np.allclose(toeplitz_covariance(3, 0.0).mat, np.eye(3))

    def test_definition(self):
        S = toeplitz_covariance(2, 0.5)
        assert np.allclose(S.mat, [[1.0, 0.5], [0.5, 1.0]])

    def test_large_dimension_corner_entry(self):
        # Oracle: arbitrary-precision power.
        S = toeplitz_covariance(50, 0.9)
        _ = S.chol  # SPD for rho < 1
        mp.dps = 60
        exact = mpf("0.9") ** 49
        assert S.mat[0, 49] == pytest.approx(float(exact), rel=1e-15)

    def test_rho_out_of_range(self):
        with pytest.raises(ValueError, match="rho"):
            toeplitz_covariance(3, 1.0)
        with pytest.raises(ValueError, match="rho"):
            toeplitz_covariance(3, -0.2)


class TestSampleGaussian:
    def test_moments_identity(self):
        draws = sample_gaussian(10**5, np.eye(2), seed=0)
        cov = draws.T @ draws / draws.shape[0]
        assert np.max(np.abs(cov - np.eye(2))) < 0.05

    def test_moments_diagonal(self):
        draws = sample_gaussian(10**5, np.diag([4.0, 1.0]), seed=1)
        var0 = float(np.var(draws[:, 0]))
        assert abs(var0 - 4.0) < 0.1

    def test_deterministic(self):
        a = sample_gaussian(100, toeplitz_covariance(4, 0.3), seed=42)
        b = sample_gaussian(100, toeplitz_covariance(4, 0.3), seed=42)
        assert np.array_equal(a, b)

    def test_trial_streams_differ(self):
        a = sample_gaussian(10, np.eye(2), trial_seed_sequence(7, 0))
        b = sample_gaussian(10, np.eye(2), trial_seed_sequence(7, 1))
        assert not np.array_equal(a, b)


class TestExperimentSpec:
    def test_validation(self):
        with pytest.raises(ValueError, match="N > m"):
            ExperimentSpec(m=5, N=5, rho=0.1, family="model", t_grid=[0.1],
                           trials=1, seed=0)
        with pytest.raises(ValueError, match="rho"):
            ExperimentSpec(m=2, N=5, rho=1.0, family="model", t_grid=[0.1],
                           trials=1, seed=0)
        with pytest.raises(ValueError, match="t_grid"):
            ExperimentSpec(m=2, N=5, rho=0.1, family="model", t_grid=[0.1, -1],
                           trials=1, seed=0)
        with pytest.raises(ValueError, match="trials"):
            ExperimentSpec(m=2, N=5, rho=0.1, family="model", t_grid=[0.1],
                           trials=0, seed=0)


class TestRunCurve:
    def test_frame_hook_zero_curve(self):
        # With the fixed tight frame, M(t) = M0 = I for every t.
        spec = ExperimentSpec(m=2, N=3, rho=0.0, family="model",
                              t_grid=[0.1, 0.5, 1.0], trials=3, seed=0)
        points = run_curve(spec, sampler=frame_sampler)
        for p in points:
            assert p.c_mean < 1e-16
            assert p.trials_used == 3

    def test_curve_decreases_toward_zero(self):
        spec = ExperimentSpec(m=4, N=16, rho=0.2, family="student-t",
                              t_grid=[0.5, 0.05, 0.005], trials=6, seed=3)
        points = run_curve(spec)
        assert points[0].c_mean > points[1].c_mean > points[2].c_mean
        assert points[2].c_mean < 0.01 * points[0].c_mean

    def test_per_trial_endpoint_ordering(self):
        # Each trial's deviation shrinks from the largest t to the smallest.
        spec = ExperimentSpec(m=4, N=16, rho=0.2, family="student-t",
                              t_grid=[0.5, 0.005], trials=8, seed=4)
        cfg = SolverConfig()
        ordered = 0
        for k in range(spec.trials):
            values, err = _run_trial(spec, cfg, k, None)
            assert err is None
            if values[1] < values[0]:
                ordered += 1
        assert ordered >= 0.95 * spec.trials

    def test_deterministic_across_workers(self):
        spec = ExperimentSpec(m=3, N=9, rho=0.5, family="model",
                              t_grid=[0.3, 0.03], trials=4, seed=9)
        serial = run_curve(spec, n_workers=1)
        parallel = run_curve(spec, n_workers=2)
        assert serial == parallel
        again = run_curve(spec, n_workers=1)
        assert serial == again

    def test_normalize_flag_changes_results(self):
        base = dict(m=3, N=12, rho=0.3, family="student-t",
                    t_grid=[0.5], trials=3, seed=5)
        a = run_curve(ExperimentSpec(normalize=True, **base))
        b = run_curve(ExperimentSpec(normalize=False, **base))
        assert a[0].c_mean != b[0].c_mean

    def test_failed_trials_excluded_and_counted(self):
        spec = ExperimentSpec(m=3, N=10, rho=0.0, family="model",
                              t_grid=[0.5], trials=40, seed=11)
        points = run_curve(spec, sampler=flaky_sampler)
        assert 0 < points[0].trials_used <= 40

    def test_too_many_failures_raise(self):
        spec = ExperimentSpec(m=3, N=10, rho=0.0, family="model",
                              t_grid=[0.5], trials=5, seed=12)
        with pytest.raises(ExperimentError, match="failed"):
            run_curve(spec, sampler=always_bad_sampler)

    def test_invalid_family_rejected(self):
        spec = ExperimentSpec(m=3, N=10, rho=0.0, family="const",
                              t_grid=[0.5], trials=2, seed=13)
        with pytest.raises(ValueError, match="conditions"):
            run_curve(spec)


class TestOutputs:
    def test_csv_format(self, tmp_path):
        points = [CurvePoint(0.5, 1.25, 0.125, 10), CurvePoint(0.1, 0.5, 0.05, 10)]
        text = format_curve_csv(points)
        lines = text.strip().split("\n")
        assert lines[0] == "t,c_mean,c_stderr,trials"
        assert lines[1] == "0.5,1.25,0.125,10"
        path = tmp_path / "curve.csv"
        write_curve_csv(points, path)
        assert path.read_text() == text

    def test_svg_written(self, tmp_path):
        points = [CurvePoint(0.1 * k, float(k), 0.1, 5) for k in range(1, 6)]
        path = tmp_path / "curve.svg"
        write_curve_svg({"rho=0.5": points}, path)
        content = path.read_text()
        assert content.startswith("<svg")
        assert "polyline" in content and "rho=0.5" in content
