"""Post-processing of surrogates and the Monte-Carlo harmonic-balance oracle.

Closed-form moments are only valid for forced systems: when the base
frequency depends on the random parameter, the mean in physical time is
no longer ``q_0(t)``, so self-excited statistics are sample-based and are
reported on normalised time ``tau = w(theta) t`` in ``[0, 2 pi]``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .basis import sample
from .fourier import FourierGrid, harmonic_magnitudes, series_at
from .galerkin import hb_guess
from .hb import HbProblem, NewtonError, ResidualNaNError, solve

COVERAGE = (0.025, 0.975)


# --- moments and summaries ---------------------------------------------------


def moments_from_coefficients(solution, times):
    """Mean ``q_0(t)`` and variance ``sum_{m>=1} q_m(t)^2``; shapes ``(n_d, n_t)``.

    Raises
    ------
    ValueError
        For self-excited solutions, whose moments must be sampled.
    """
    if solution.self_excited:
        raise ValueError(
            "closed-form moments need a fixed base frequency; use sample_summary for self-excited systems"
        )
    q = np.moveaxis(solution.complex_coefficients, -1, 0)  # (N+1, n_d, 2H+1)
    series = series_at(q, solution.forcing_frequency, times)  # (N+1, n_d, n_t)
    return series[0], np.sum(series[1:] ** 2, axis=0)


@dataclass
class StochasticSummary:
    """Per-time-point statistics of sampled surrogate paths.

    ``lower``/``upper`` are empirical 2.5 %/97.5 % quantiles; the
    ``*_path`` series are the sample paths whose parameters sit nearest the
    2.5 %/97.5 % positions of the sorted input sample.
    """

    times: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    lower_path: np.ndarray
    upper_path: np.ndarray
    theta_lower: float
    theta_upper: float
    n_samples: int
    normalized: bool = False
    alignment: str = "forcing phase"

    def coverage(self, paths):
        """Fraction of `paths` ``(n_s, n_d, n_t)`` inside ``[lower, upper]`` per point."""
        inside = (paths >= self.lower) & (paths <= self.upper)
        return inside.mean(axis=0)


def _period_times(solution, n_time):
    if solution.self_excited:
        return np.linspace(0.0, 2 * np.pi, n_time)
    return np.linspace(0.0, solution.period, n_time)


def surrogate_paths(solution, thetas, times, chunk=2048):
    """Sample paths ``(n_s, n_d, n_t)``; `times` are phases for self-excited systems."""
    f = solution.evaluate_phase if solution.self_excited else solution.evaluate
    thetas = np.asarray(thetas, dtype=float)
    return np.concatenate([f(thetas[i:i + chunk], times) for i in range(0, len(thetas), chunk)])


def summary_from_paths(times, paths, thetas_sorted, normalized=False, chunk=64):
    """Build a :class:`StochasticSummary` from paths ordered like `thetas_sorted`."""
    n = paths.shape[0]
    i_lo = int(round(COVERAGE[0] * (n - 1)))
    i_hi = int(round(COVERAGE[1] * (n - 1)))
    mean = np.empty(paths.shape[1:])
    var = np.empty_like(mean)
    lo = np.empty_like(mean)
    hi = np.empty_like(mean)
    for s in range(0, paths.shape[-1], chunk):
        block = paths[..., s:s + chunk]
        mean[..., s:s + chunk] = block.mean(axis=0)
        var[..., s:s + chunk] = block.var(axis=0)
        lo[..., s:s + chunk], hi[..., s:s + chunk] = np.quantile(block, COVERAGE, axis=0)
    return StochasticSummary(
        np.asarray(times), mean, var, lo, hi, paths[i_lo].copy(), paths[i_hi].copy(),
        float(thetas_sorted[i_lo]), float(thetas_sorted[i_hi]), n, normalized,
        "anchor phase (b_1 of the anchor state)" if normalized else "forcing phase",
    )


def sample_summary(solution, dist, n_samples, seed, n_time=128):
    """Mean, variance and 95 % coverage series over one period from sorted samples."""
    thetas = np.sort(sample(dist, n_samples, seed))
    times = _period_times(solution, n_time)
    paths = surrogate_paths(solution, thetas, times)
    return summary_from_paths(times, paths, thetas, solution.self_excited)


@dataclass
class Marginal:
    time_point: float
    values: np.ndarray
    counts: np.ndarray
    edges: np.ndarray
    density: np.ndarray
    mean: float
    lower: float
    upper: float
    skewness: float

    def to_dict(self):
        return {
            "time_point": self.time_point,
            "mean": self.mean,
            "lower": self.lower,
            "upper": self.upper,
            "skewness": self.skewness,
            "n_samples": int(len(self.values)),
            "edges": self.edges.tolist(),
            "counts": self.counts.tolist(),
            "density": self.density.tolist(),
        }


def marginal_from_values(values, time_point, bins="fd"):
    values = np.asarray(values, dtype=float)
    edges = np.histogram_bin_edges(values, bins=bins)
    counts, edges = np.histogram(values, bins=edges)
    widths = np.diff(edges)
    density = counts / (counts.sum() * np.where(widths > 0, widths, 1.0))
    lo, hi = np.quantile(values, COVERAGE)
    return Marginal(float(time_point), values, counts, edges, density, float(values.mean()),
                    float(lo), float(hi), float(stats.skew(values)))


def marginal_at(solution, dist, n_samples, time_point, seed=0, state=0, bins="fd"):
    """Empirical distribution of ``x(time_point, theta)``.

    `time_point` is physical time for forced systems and normalised time for
    self-excited ones.
    """
    thetas = np.sort(sample(dist, n_samples, seed))
    vals = surrogate_paths(solution, thetas, np.array([time_point]))[:, state, 0]
    return marginal_from_values(vals, time_point, bins)


# --- coefficients and convergence --------------------------------------------


@dataclass
class CoefficientGrid:
    magnitudes: np.ndarray  # (n_d, H+1, N+1)
    omega: np.ndarray | None = None  # (N+1,)


def coefficient_grid(solution):
    """``sqrt(a_km^2 + b_km^2)`` per state, harmonic and degree (``|a_0m|`` for k=0)."""
    mags = harmonic_magnitudes(np.moveaxis(solution.complex_coefficients, -1, 0))
    om = None if solution.omega_coefficients is None else np.abs(solution.omega_coefficients)
    return CoefficientGrid(np.moveaxis(mags, 0, -1), om)


def period_average_abs(solution, thetas, n_quad=1024):
    """``(1/T) int_0^T |x(t, theta)| dt`` per sample and state, ``(n_s, n_d)``.

    The trapezoid rule on an equispaced periodic grid reduces to the mean of
    the samples; the period is per sample for self-excited systems.
    """
    phases = 2 * np.pi * np.arange(n_quad) / n_quad
    c = solution.coefficients_at(thetas)
    return np.abs(series_at(c, 1.0, phases)).mean(axis=-1)


def rms_error(sol, ref, thetas, n_quad=1024):
    """Root mean square over samples of the period-averaged ``|x|`` difference, summed over states."""
    d = period_average_abs(sol, thetas, n_quad) - period_average_abs(ref, thetas, n_quad)
    return float(np.sum(np.sqrt(np.mean(d**2, axis=0))))


@dataclass
class ErrorMap:
    H_list: list
    N_list: list
    errors: np.ndarray  # (len(H_list), len(N_list)); NaN marks a failed cell
    reference: tuple
    n_samples: int
    failures: dict = field(default_factory=dict)

    def __getitem__(self, key):
        H, N = key
        return self.errors[self.H_list.index(H), self.N_list.index(N)]

    @property
    def absent(self):
        return np.isnan(self.errors)


def convergence_map(solve_fn, H_list, N_list, reference, dist, n_samples, seed=0,
                    reference_solution=None, max_workers=1):
    """Error map of period-averaged amplitudes against a reference surrogate.

    Parameters
    ----------
    solve_fn : callable
        ``solve_fn(H, N) -> FgpcSolution``; exceptions mark the cell absent.
    reference : (H_ref, N_ref)
        Cells with a listed ``H > H_ref`` or ``N > N_ref`` are still computed
        but a warning is issued.
    """
    import warnings

    H_list, N_list = list(H_list), list(N_list)
    if max(H_list) > reference[0] or max(N_list) > reference[1]:
        warnings.warn(f"some cells exceed the reference {reference}; their errors are not truncation errors")
    thetas = np.sort(sample(dist, n_samples, seed))
    ref = reference_solution if reference_solution is not None else solve_fn(*reference)
    errors = np.full((len(H_list), len(N_list)), np.nan)
    failures = {}

    def cell(H, N):
        if (H, N) == tuple(reference):
            return 0.0
        return rms_error(solve_fn(H, N), ref, thetas)

    jobs = [(i, j, H, N) for i, H in enumerate(H_list) for j, N in enumerate(N_list)]
    if max_workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers) as ex:
            futs = {(i, j, H, N): ex.submit(cell, H, N) for i, j, H, N in jobs}
        results = {k: f for k, f in futs.items()}
        for (i, j, H, N), f in results.items():
            try:
                errors[i, j] = f.result()
            except Exception as exc:  # solver failures leave the cell empty
                failures[(H, N)] = str(exc)
    else:
        for i, j, H, N in jobs:
            try:
                errors[i, j] = cell(H, N)
            except Exception as exc:
                failures[(H, N)] = str(exc)
    return ErrorMap(H_list, N_list, errors, tuple(reference), n_samples, failures)


# --- Monte-Carlo oracle ------------------------------------------------------


@dataclass
class MonteCarloResult:
    thetas: np.ndarray
    coefficients: np.ndarray  # complex (n_s, n_d, 2H+1); NaN rows for failures
    omega: np.ndarray
    iterations: np.ndarray
    failures: list
    wall_time: float
    self_excited: bool

    def paths(self, times, chunk=2048):
        """Per-sample paths; `times` are phases for self-excited systems."""
        w = np.ones(len(self.thetas)) if self.self_excited else self.omega
        return np.concatenate([
            series_at(self.coefficients[i:i + chunk], w[i:i + chunk, None], times)
            for i in range(0, len(w), chunk)
        ])

    @property
    def ok(self):
        return ~np.isnan(self.omega)


def mc_oracle(system, thetas, H, n_time=None, initial=None, anchor_value=None,
              tol=1e-10, max_iter=50):
    """Deterministic harmonic balance per sample, warm-started along sorted samples.

    The first sample starts from `initial` (unknown vector) or from a time
    integration at that sample.  For self-excited systems an explicit
    `anchor_value` overrides the one measured from the integration, so the
    oracle shares the phase convention of a surrogate it is compared with.
    A failed sample is recorded and the chain continues from the last
    converged solution.
    """
    thetas = np.asarray(thetas, dtype=float)
    if np.any(np.diff(thetas) < 0):
        raise ValueError("samples must be sorted ascending")
    grid = FourierGrid(H, n_time, system.n_d, system.d_nl)
    t0 = time.perf_counter()
    if initial is None:
        g = hb_guess(system, grid, thetas[0])
        initial = g.unknowns
        if anchor_value is None:
            anchor_value = g.anchor_value
    problem = HbProblem(system, grid, thetas[0], anchor_value=anchor_value or 0.0)
    n = len(thetas)
    coeffs = np.full((n, system.n_d, grid.n_harm), np.nan, dtype=complex)
    omega = np.full(n, np.nan)
    iters = np.zeros(n, dtype=int)
    failures = []
    u = np.asarray(initial, dtype=float)
    for i, th in enumerate(thetas):
        p = problem.with_theta(th)
        try:
            u_new, info = solve(p, u, tol, max_iter)
        except (NewtonError, ResidualNaNError, np.linalg.LinAlgError) as exc:
            failures.append({"index": i, "theta": float(th), "error": str(exc)})
            continue
        u = u_new
        c, w = p.unpack(u)
        coeffs[i], omega[i], iters[i] = c, w, info.iterations
    return MonteCarloResult(thetas, coeffs, omega, iters, failures,
                            time.perf_counter() - t0, system.self_excited)


@dataclass
class Comparison:
    """Surrogate-minus-oracle differences of mean and coverage bounds over a period."""

    times: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def max_abs_mean(self):
        return float(np.max(np.abs(self.mean)))


def compare_summaries(a, b):
    return Comparison(a.times, a.mean - b.mean, a.lower - b.lower, a.upper - b.upper)


# --- phase portraits ---------------------------------------------------------


@dataclass
class PhasePortrait:
    mean: np.ndarray  # (2, n_t)
    lower: np.ndarray
    upper: np.ndarray
    states: tuple
    theta_lower: float
    theta_upper: float


def _velocity_paths(solution, thetas, times, state):
    k = np.arange(-solution.H, solution.H + 1)
    c = solution.coefficients_at(thetas)[:, state]
    w = solution.omega_at(thetas)
    dc = c * 1j * k * np.asarray(w)[:, None]
    wt = 1.0 if solution.self_excited else solution.forcing_frequency
    return series_at(dc, wt, times)


def phase_portrait(solution, dist, n_samples, seed=0, states=None, n_time=513, chunk=2048):
    """Closed curves over one period for the mean and both boundary sample paths.

    For one-dimensional systems the portrait is ``(x, dx/dt)``; otherwise
    `states` selects the pair of state indices to plot.
    """
    thetas = np.sort(sample(dist, n_samples, seed))
    times = _period_times(solution, n_time)
    if states is None:
        if solution.n_d != 1:
            raise ValueError("pick a pair of states for multi-state portraits")
        states = (0, "velocity")

    def pair(th):
        x = surrogate_paths(solution, th, times)
        first = x[:, states[0]]
        if states[1] == "velocity":
            return first, _velocity_paths(solution, th, times, states[0])
        return first, x[:, states[1]]

    total = np.zeros((2, len(times)))
    for i in range(0, n_samples, chunk):
        a, b = pair(thetas[i:i + chunk])
        total += np.stack([a.sum(axis=0), b.sum(axis=0)])
    i_lo = int(round(COVERAGE[0] * (n_samples - 1)))
    i_hi = int(round(COVERAGE[1] * (n_samples - 1)))
    a, b = pair(thetas[[i_lo, i_hi]])
    return PhasePortrait(
        total / n_samples, np.stack([a[0], b[0]]), np.stack([a[1], b[1]]),
        tuple(states), float(thetas[i_lo]), float(thetas[i_hi]),
    )


def curve_area(curve):
    """Shoelace area enclosed by a closed ``(2, n)`` curve."""
    x, y = curve
    return 0.5 * abs(np.dot(x[:-1], y[1:]) - np.dot(x[1:], y[:-1]))
