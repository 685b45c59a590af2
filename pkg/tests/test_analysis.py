import numpy as np
import pytest

from fgpc.analysis import (
    coefficient_grid,
    compare_summaries,
    convergence_map,
    curve_area,
    marginal_at,
    mc_oracle,
    moments_from_coefficients,
    phase_portrait,
    rms_error,
    sample_summary,
    summary_from_paths,
    surrogate_paths,
)
from fgpc.basis import Distribution, sample
from fgpc.fourier import FourierGrid
from fgpc.galerkin import FgpcProblem, hb_guess, initial_guess, solve_fgpc
from fgpc.hb import HbProblem, solve
from fgpc.systems import DuffingParams, duffing_system, vanderpol_system

BETA = Distribution.beta4(5, 5, 0.8, 1.2)
UNIF = Distribution.uniform(0.8, 1.2)


def fgpc(sys_, dist, H, N, **kw):
    P = FgpcProblem.build(sys_, dist, H, N)
    return solve_fgpc(P, initial_guess(P, **kw))


@pytest.fixture(scope="module")
def duffing():
    return fgpc(duffing_system(), BETA, 5, 12)


@pytest.fixture(scope="module")
def linear():
    return fgpc(duffing_system(DuffingParams(beta=0.0)), BETA, 1, 8)


@pytest.fixture(scope="module")
def vdp():
    return fgpc(vanderpol_system(), UNIF, 8, 4, n_periods=60)


def test_degree_zero_has_no_variance():
    sol = fgpc(duffing_system(), BETA, 3, 0)
    _, var = moments_from_coefficients(sol, np.linspace(0, sol.period, 50))
    np.testing.assert_array_equal(var, 0.0)


def test_moments_agree_with_sampling(duffing):
    t = np.linspace(0, duffing.period, 17)
    mean, var = moments_from_coefficients(duffing, t)
    n = 40000
    x = surrogate_paths(duffing, sample(BETA, n, seed=3), t)[:, 0]
    sd = x.std(axis=0)
    assert np.all(np.abs(x.mean(axis=0) - mean[0]) < 4 * sd / np.sqrt(n) + 1e-12)
    # variance of the sample variance ~ (m4 - s^4) / n
    m4 = np.mean((x - x.mean(axis=0)) ** 4, axis=0)
    assert np.all(np.abs(x.var(axis=0) - var[0]) < 4 * np.sqrt((m4 - sd**4) / n) + 1e-12)


def test_coverage_on_fresh_samples(duffing):
    s = sample_summary(duffing, BETA, 20000, seed=0, n_time=64)
    fresh = surrogate_paths(duffing, sample(BETA, 20000, seed=1), s.times)
    cov = s.coverage(fresh)
    assert 0.945 <= cov.mean() <= 0.955
    assert np.all(s.lower <= s.mean) and np.all(s.mean <= s.upper)
    np.testing.assert_array_equal(s.lower_path, surrogate_paths(duffing, [s.theta_lower], s.times)[0])


def test_boundary_paths_cross(duffing):
    s = sample_summary(duffing, BETA, 5000, seed=0, n_time=400)
    d = (s.upper_path - s.lower_path)[0, :-1]
    assert np.count_nonzero(np.diff(np.sign(d)) != 0) >= 2


def test_summary_quantile_positions():
    times = np.arange(3.0)
    paths = np.arange(201.0)[:, None, None] * np.ones((1, 1, 3))
    s = summary_from_paths(times, paths, np.arange(201.0))
    assert s.theta_lower == 5.0 and s.theta_upper == 195.0
    np.testing.assert_allclose(s.lower[0], 5.0)
    np.testing.assert_allclose(s.mean[0], 100.0)


def test_marginal_skewness(duffing, linear):
    m = marginal_at(duffing, BETA, 100000, 2.0, seed=0)
    assert m.skewness > 0.1
    assert m.counts.sum() == 100000
    assert np.sum(m.density * np.diff(m.edges)) == pytest.approx(1.0)
    assert m.lower < m.mean < m.upper
    lin = marginal_at(linear, BETA, 100000, 2.0, seed=0)
    assert abs(lin.skewness) < abs(m.skewness)


def test_self_excited_mean_frequency(vdp):
    n = 20000
    w = vdp.omega_at(sample(UNIF, n, seed=2))
    assert abs(w.mean() - vdp.omega_coefficients[0]) < 4 * w.std() / np.sqrt(n)
    s = sample_summary(vdp, UNIF, 2000, seed=0, n_time=33)
    assert s.normalized and s.times[-1] == pytest.approx(2 * np.pi)
    np.testing.assert_allclose(s.mean[:, 0], s.mean[:, -1], atol=1e-12)


def test_coefficient_grid(duffing):
    g = coefficient_grid(duffing)
    assert g.magnitudes.shape == (1, 6, 13) and g.omega is None
    m = g.magnitudes[0, 1]
    assert m[-1] < 1e-6 * m[0]
    np.testing.assert_array_less(g.magnitudes[0, ::2], 1e-8)
    # the degree-zero column of an N = 0 solve is the deterministic spectrum
    sol0 = fgpc(duffing_system(), BETA, 5, 0)
    hb = HbProblem(duffing_system(), FourierGrid(5, None, 1, 3), 1.0)
    u, _ = solve(hb, hb_guess(hb.system, hb.grid, 1.0).unknowns)
    np.testing.assert_allclose(coefficient_grid(sol0).magnitudes[0, :, 0], hb.coefficients(u).magnitudes()[0],
                               atol=1e-9)


def test_convergence_map_and_metric():
    sys_ = duffing_system()
    cache = {}

    def solve_fn(H, N):
        if (H, N) not in cache:
            cache[H, N] = fgpc(sys_, BETA, H, N)
        return cache[H, N]

    thetas = np.sort(sample(BETA, 200, 0))
    a, b = solve_fn(3, 2), solve_fn(3, 4)
    assert rms_error(a, a, thetas) == 0.0
    assert rms_error(a, b, thetas) == pytest.approx(rms_error(b, a, thetas), rel=1e-12)
    c = solve_fn(1, 0)
    assert rms_error(a, c, thetas) <= rms_error(a, b, thetas) + rms_error(b, c, thetas) + 1e-15

    emap = convergence_map(solve_fn, [1, 3], [0, 2, 4], (3, 4), BETA, 200)
    assert emap[3, 4] == 0.0 and not emap.absent.any()
    assert emap[3, 0] > emap[3, 2] > 0
    assert emap[1, 4] > emap[3, 2]

    def flaky(H, N):
        if N == 2:
            raise RuntimeError("no convergence")
        return solve_fn(H, N)

    emap = convergence_map(flaky, [1, 3], [0, 2, 4], (3, 4), BETA, 50, max_workers=2)
    assert emap.absent.sum() == 2 and (1, 2) in emap.failures
    with pytest.warns(UserWarning, match="reference"):
        convergence_map(solve_fn, [3], [4], (3, 2), BETA, 20)


def test_mc_oracle_warm_start_and_single_sample(duffing):
    sys_ = duffing_system()
    th = np.sort(sample(BETA, 100, seed=0))
    res = mc_oracle(sys_, th, 5)
    assert res.ok.all() and not res.failures
    assert np.all(res.iterations[1:] <= 5)
    # a single sample is the deterministic solve
    one = mc_oracle(sys_, th[:1], 5)
    hb = HbProblem(sys_, FourierGrid(5, None, 1, 3), th[0])
    u, _ = solve(hb, hb_guess(sys_, hb.grid, th[0]).unknowns)
    np.testing.assert_allclose(one.coefficients[0], hb.unpack(u)[0], atol=1e-10)
    with pytest.raises(ValueError, match="sorted"):
        mc_oracle(sys_, th[::-1], 5)
    # surrogate and oracle statistics agree
    t = np.linspace(0, duffing.period, 64)
    sur = summary_from_paths(t, surrogate_paths(duffing, th, t), th)
    orc = summary_from_paths(t, res.paths(t), th)
    assert compare_summaries(sur, orc).max_abs_mean < 1e-6


def test_mc_oracle_self_excited(vdp):
    th = np.sort(sample(UNIF, 20, seed=0))
    res = mc_oracle(vanderpol_system(), th, 8, anchor_value=vdp.anchor_value)
    assert res.ok.all()
    np.testing.assert_allclose(res.omega, vdp.omega_at(th), rtol=1e-6)
    assert np.all(np.diff(res.omega) < 0)


def test_phase_portrait_linear_ellipse(linear):
    pp = phase_portrait(linear, BETA, 5000, seed=0, n_time=513)
    for curve in (pp.mean, pp.lower, pp.upper):
        np.testing.assert_allclose(curve[:, 0], curve[:, -1], atol=1e-10)
    W = 1.4
    for th, curve in ((pp.theta_lower, pp.lower), (pp.theta_upper, pp.upper)):
        A = 0.2 / np.hypot(th - W**2, 0.08 * W)
        area = curve_area(curve)
        assert area == pytest.approx(np.pi * A * A * W, rel=1e-2)
    # boundary curves are the surrogate at the boundary parameters
    x = surrogate_paths(linear, [pp.theta_lower], np.linspace(0, linear.period, 513))[0, 0]
    np.testing.assert_allclose(pp.lower[0], x, atol=1e-12)


def test_phase_portrait_self_excited(vdp):
    pp = phase_portrait(vdp, UNIF, 500, n_time=257)
    np.testing.assert_allclose(pp.mean[:, 0], pp.mean[:, -1], atol=1e-10)
    assert curve_area(pp.lower) > 1.0 and curve_area(pp.upper) > 1.0
