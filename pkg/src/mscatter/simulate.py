"""Synthetic data and the Monte-Carlo convergence experiment.

The experiment draws N zero-mean Gaussian samples with a Toeplitz
covariance (entry rho^|i-j|), estimates the tail-indexed scatter M(t) on a
t-grid together with its t -> 0 limit M0 = xi * P, and reports the mean
squared Frobenius deviation C(t) = E||M(t) - M0||_F^2 per grid point.

Reproducibility contract: every trial draws from its own counter-based
stream keyed by (seed, trial index), and the reduction over trials runs in
index order, so results are bit-identical regardless of worker count or
scheduling.
"""

import concurrent.futures
from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .data import Dataset, SpdMatrix, check_admissibility, normalize_dataset
from .families import WeightConditionError, get_family, validate_conditions
from .solver import SolverConfig, limit_path
from .data import NotPositiveDefiniteError


class ExperimentError(RuntimeError):
    """Raised when too many Monte-Carlo trials fail to produce estimates."""


def toeplitz_covariance(m, rho):
    """The m x m SPD matrix with entries rho^|i-j|, for 0 <= rho < 1."""
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must be in [0, 1), got {rho}")
    return SpdMatrix(toeplitz(rho ** np.arange(m)))


def _rng_from(seed):
    if isinstance(seed, np.random.SeedSequence):
        ss = seed
    else:
        ss = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(ss))


def trial_seed_sequence(seed, trial):
    """Independent per-trial stream key; stable across worker layouts."""
    return np.random.SeedSequence(entropy=seed, spawn_key=(trial,))


def sample_gaussian(n, sigma, seed):
    """n zero-mean Gaussian draws with covariance sigma, as an (n, m) array.

    Deterministic in (seed, n, sigma): the same inputs yield bit-identical
    output.  ``seed`` may be an integer or a numpy SeedSequence.
    """
    sigma = sigma if isinstance(sigma, SpdMatrix) else SpdMatrix(sigma)
    rng = _rng_from(seed)
    z = rng.standard_normal((n, sigma.m))
    return z @ sigma.chol.T


@dataclass
class ExperimentSpec:
    """Parameters of one Monte-Carlo convergence experiment."""

    m: int
    N: int
    rho: float
    family: str
    t_grid: list
    trials: int
    seed: int
    normalize: bool = True

    def __post_init__(self):
        if self.N <= self.m:
            raise ValueError(f"need N > m, got N={self.N}, m={self.m}")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must be in [0, 1), got {self.rho}")
        self.t_grid = [float(t) for t in self.t_grid]
        if not self.t_grid or any(t <= 0 for t in self.t_grid):
            raise ValueError("t_grid must be non-empty and positive")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass
class CurvePoint:
    """One Monte-Carlo estimate of C(t) with its standard error."""

    t: float
    c_mean: float
    c_stderr: float
    trials_used: int


def _default_sampler(spec, rng):
    sigma = toeplitz_covariance(spec.m, spec.rho)
    z = rng.standard_normal((spec.N, spec.m))
    return z @ sigma.chol.T


def _run_trial(spec, cfg, trial, sampler):
    """One trial: draw data, solve the limit path, return squared deviations.

    Returns (values_in_grid_order, None) on success, (None, reason) on a
    failed trial (non-convergence, loss of definiteness, inadmissibility).
    """
    sampler = sampler or _default_sampler
    rng = _rng_from(trial_seed_sequence(spec.seed, trial))
    raw = sampler(spec, rng)
    try:
        if spec.normalize:
            ds = normalize_dataset(raw)
        else:
            ds = Dataset(raw, unit_norm=False)
        verdict = check_admissibility(ds, mode="randomized", seed=trial)
        if not verdict.verified:
            return None, f"inadmissible sample: witness {verdict.witness}"
        order = np.argsort(spec.t_grid)[::-1]      # solve large t first, warm start
        t_desc = [spec.t_grid[i] for i in order]
        result = limit_path(ds, get_family(spec.family, spec.m), t_desc, cfg)
        if not result.tyler_report.converged:
            return None, "t=0 solve did not converge"
        for p in result.points:
            if not p.report.converged:
                return None, f"solve at t={p.t:g} did not converge"
        values = np.empty(len(spec.t_grid))
        for pos, p in zip(order, result.points):
            values[pos] = p.deviation ** 2
        return values, None
    except (NotPositiveDefiniteError, WeightConditionError, ValueError) as exc:
        return None, str(exc)


def run_curve(spec, cfg=None, n_workers=1, sampler=None):
    """Estimate C(t) over spec.t_grid by Monte-Carlo.

    Failed trials are excluded and counted; more than 10% failures raises
    ExperimentError.  ``sampler(spec, rng) -> (N, m) array`` may replace the
    Gaussian-Toeplitz draw (it must be picklable to run with n_workers > 1).
    """
    cfg = cfg or SolverConfig()
    sampler = sampler or _default_sampler
    report = validate_conditions(get_family(spec.family, spec.m))
    if not report.all_passed:
        names = [c.name for c in report.failed()]
        raise ValueError(f"family {spec.family!r} fails conditions: {names}")

    results = [None] * spec.trials
    if n_workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=n_workers) as pool:
            futures = {pool.submit(_run_trial, spec, cfg, k, sampler): k
                       for k in range(spec.trials)}
            for fut in concurrent.futures.as_completed(futures):
                results[futures[fut]] = fut.result()
    else:
        for k in range(spec.trials):
            results[k] = _run_trial(spec, cfg, k, sampler)

    failures = [(k, reason) for k, (vals, reason) in enumerate(results)
                if vals is None]
    if len(failures) > 0.1 * spec.trials:
        raise ExperimentError(
            f"{len(failures)}/{spec.trials} trials failed "
            f"(first: trial {failures[0][0]}: {failures[0][1]})")

    kept = np.array([vals for vals, _ in results if vals is not None])
    points = []
    for j, t in enumerate(spec.t_grid):
        col = kept[:, j]
        n_used = col.size
        mean = float(np.mean(col))
        stderr = float(np.std(col, ddof=1) / np.sqrt(n_used)) if n_used > 1 else 0.0
        points.append(CurvePoint(float(t), mean, stderr, n_used))
    return points


def format_curve_csv(points):
    lines = ["t,c_mean,c_stderr,trials"]
    for p in points:
        lines.append(f"{p.t:.17g},{p.c_mean:.17g},{p.c_stderr:.17g},{p.trials_used}")
    return "\n".join(lines) + "\n"


def write_curve_csv(points, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_curve_csv(points))


def write_curve_svg(curves, path, width=640, height=440, title="C(t) vs t"):
    """Minimal SVG line plot of one or more curves on linear axes.

    ``curves`` maps a label to a list of CurvePoints.
    """
    if not isinstance(curves, dict):
        curves = {"": curves}
    margin = 60
    xs = [p.t for pts in curves.values() for p in pts]
    ys = [p.c_mean for pts in curves.values() for p in pts]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(0.0, min(ys)), max(ys)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def sx(x):
        return margin + (x - x_lo) / (x_hi - x_lo) * (width - 2 * margin)

    def sy(y):
        return height - margin - (y - y_lo) / (y_hi - y_lo) * (height - 2 * margin)

    colors = ["#c0392b", "#2980b9", "#27ae60", "#8e44ad", "#d35400"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        f'stroke="black"/>',
    ]
    for k in range(5):
        xv = x_lo + k * (x_hi - x_lo) / 4
        yv = y_lo + k * (y_hi - y_lo) / 4
        parts.append(f'<line x1="{sx(xv):.1f}" y1="{height - margin}" '
                     f'x2="{sx(xv):.1f}" y2="{height - margin + 5}" stroke="black"/>')
        parts.append(f'<text x="{sx(xv):.1f}" y="{height - margin + 18}" '
                     f'text-anchor="middle" font-size="10">{xv:.3g}</text>')
        parts.append(f'<line x1="{margin - 5}" y1="{sy(yv):.1f}" '
                     f'x2="{margin}" y2="{sy(yv):.1f}" stroke="black"/>')
        parts.append(f'<text x="{margin - 8}" y="{sy(yv) + 3:.1f}" '
                     f'text-anchor="end" font-size="10">{yv:.3g}</text>')
    for ci, (label, pts) in enumerate(curves.items()):
        color = colors[ci % len(colors)]
        coords = " ".join(f"{sx(p.t):.2f},{sy(p.c_mean):.2f}" for p in pts)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                     'stroke-width="1.5"/>')
        if label:
            parts.append(f'<text x="{width - margin - 5}" '
                         f'y="{margin + 15 * ci + 10}" text-anchor="end" '
                         f'font-size="11" fill="{color}">{label}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
