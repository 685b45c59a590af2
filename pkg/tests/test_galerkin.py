import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fgpc.basis import Distribution, build_basis, evaluate_basis, gauss_rule
from fgpc.fourier import (
    FourierGrid,
    HarmonicCoefficients,
    differentiate,
    evaluate_series,
    from_real_layout,
    series_at,
)
from fgpc.galerkin import (
    FgpcProblem,
    FgpcSolution,
    Guess,
    assemble_fgpc_residual,
    evaluate_surrogate,
    hb_guess,
    initial_guess,
    solve_fgpc,
)
from fgpc.hb import DeflationConfig, HbProblem, solve
from fgpc.systems import DuffingParams, duffing_system, vanderpol_system

BETA = Distribution.beta4(5, 5, 0.8, 1.2)


@pytest.fixture(scope="module")
def duffing():
    sys_ = duffing_system()
    P = FgpcProblem.build(sys_, BETA, 5, 12)
    g = initial_guess(P)
    return P, g, solve_fgpc(P, g)


def test_layout_sizes():
    P = FgpcProblem.build(duffing_system(), BETA, 5, 12)
    assert P.n_unknowns == 1 * 11 * 13
    assert P.grid.n_time == 32 and P.quad.size == 32
    V = FgpcProblem.build(vanderpol_system(), Distribution.uniform(0.8, 1.2), 10, 6, anchor_value=0.7)
    assert V.n_unknowns == 21 * 7  # b_{1,m} removed, q_{w,m} added
    u = np.random.default_rng(0).normal(size=V.n_unknowns)
    Q, qw = V.unpack(u)
    assert Q[0, 2, 0] == 0.7 and np.all(Q[0, 2, 1:] == 0)
    np.testing.assert_array_equal(V.pack(Q, qw), u)


@settings(max_examples=5, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_degree_zero_single_node_is_hb(seed):
    rng = np.random.default_rng(seed)
    for sys_, dist, H in ((duffing_system(), BETA, 5), (vanderpol_system(), Distribution.uniform(0.8, 1.2), 4)):
        basis = build_basis(dist, 0)
        P = FgpcProblem(sys_, FourierGrid(H, None, 1, 3), basis, gauss_rule(basis, 1), anchor_value=0.3)
        hb = HbProblem(sys_, P.grid, P.nominal_theta, anchor_value=0.3)
        U = rng.normal(size=(20, P.n_unknowns))
        if sys_.self_excited:
            U[:, -1] = np.abs(U[:, -1]) + 0.5
        assert np.max(np.abs(P.residual(U) - hb.residual(U))) < 1e-13


def test_linear_galerkin_equals_discrete_projection():
    # with N+1 nodes the discrete Galerkin system is equivalent to solving
    # every node exactly; its coefficients are the discrete projection of
    # the closed-form amplitudes
    N = 6
    sys_ = duffing_system(DuffingParams(beta=0.0))
    P = FgpcProblem.build(sys_, BETA, 1, N, n_quad=N + 1)
    u = solve_fgpc(P, np.zeros(P.n_unknowns))
    th, w = P.quad.nodes, P.quad.weights
    X = 0.2 / (th - 1.4**2 + 1j * 0.08 * 1.4)
    phi = evaluate_basis(P.basis, th)
    a1 = (w * X.real) @ phi
    b1 = (w * -X.imag) @ phi
    np.testing.assert_allclose(u.coefficients[0, 1], a1, atol=1e-10)
    np.testing.assert_allclose(u.coefficients[0, 2], b1, atol=1e-10)
    np.testing.assert_allclose(u.coefficients[0, 0], 0.0, atol=1e-12)


def test_initial_guess_quality(duffing):
    P, g, sol = duffing
    Q, _ = P.unpack(g.unknowns)
    assert np.all(Q[..., 1:] == 0)
    amp0 = np.hypot(*Q[0, 1:3, 0])
    hb_u, _ = solve(P.hb_problem(), P.hb_problem().pack(from_real_layout(Q[..., 0])))
    hb_amp = np.hypot(*hb_u[1:3])
    assert abs(amp0 - hb_amp) < 0.02 * hb_amp


def test_linear_initial_guess_solves_degree_zero():
    sys_ = duffing_system(DuffingParams(beta=0.0))
    P = FgpcProblem.build(sys_, BETA, 3, 0)
    g = initial_guess(P)
    assert np.max(np.abs(P.residual(g.unknowns))) < 1e-6


def test_zero_guess_weak_nonlinearity():
    sys_ = duffing_system(DuffingParams(beta=0.01))
    P = FgpcProblem.build(sys_, BETA, 3, 4)
    sol = solve_fgpc(P, initial_guess(P, zero=True))
    assert sol.residual_norm < 1e-10
    with pytest.raises(ValueError):
        initial_guess(FgpcProblem.build(vanderpol_system(), Distribution.uniform(0.8, 1.2), 3, 1), zero=True)


def test_duffing_solution_properties(duffing):
    P, g, sol = duffing
    assert np.max(np.abs(assemble_fgpc_residual(P, P.pack(sol.coefficients)))) < 1e-10
    c = sol.complex_coefficients  # (n_d, 2H+1, N+1)
    np.testing.assert_allclose(c[:, ::-1, :], np.conj(c), atol=0)
    mags = np.abs(c)
    assert np.max(mags[:, 5 + np.array([-4, -2, 0, 2, 4])]) < 1e-8 * mags.max()


def test_quadrature_refinement_is_stable(duffing):
    P, g, sol = duffing
    P2 = FgpcProblem.build(P.system, BETA, 5, 12, n_quad=2 * P.quad.size)
    sol2 = solve_fgpc(P2, P2.pack(sol.coefficients))
    rel = np.max(np.abs(sol2.coefficients - sol.coefficients)) / np.max(np.abs(sol.coefficients))
    assert rel < 1e-8


def test_surrogate_consistency(duffing):
    P, g, sol = duffing
    u = P.pack(sol.coefficients)
    c_nodes, _ = P.node_coefficients(u)
    T = 2 * np.pi / 1.4
    t = P.grid.t_nodes / 1.4
    for z in (0, 7, 31):
        direct = series_at(c_nodes[z], 1.4, t)
        np.testing.assert_allclose(evaluate_surrogate(sol, P.quad.nodes[z], t), direct, atol=1e-12)
    # against the deterministic solution at theta = 1
    hb = P.hb_problem(1.0)
    hb_u, _ = solve(hb, hb.pack(sol.coefficients_at(1.0)))
    tt = np.linspace(0, T, 200)
    ref = series_at(hb.unpack(hb_u)[0], 1.4, tt)
    assert np.sqrt(np.mean((sol.evaluate(1.0, tt) - ref) ** 2)) < 1e-4


def test_degree_zero_surrogate_ignores_theta():
    P = FgpcProblem.build(duffing_system(), BETA, 3, 0)
    sol = solve_fgpc(P, initial_guess(P))
    t = np.linspace(0, 4, 9)
    np.testing.assert_array_equal(sol.evaluate(0.85, t), sol.evaluate(1.15, t))


def test_deflation_recovers_three_branches(duffing):
    P, g, _ = duffing
    res = solve_fgpc(P, g, DeflationConfig())
    assert len(res) == 3
    amps = [np.hypot(*s.coefficients[0, 1:3, 0]) for s in res]
    assert amps == sorted(amps, reverse=True)
    assert amps[0] > 1.1 and 0.3 < amps[1] < 1.1 and amps[2] < 0.3
    assert [s.label for s in res] == ["branch0", "branch1", "branch2"]
    for s in res:
        assert np.max(np.abs(P.residual(P.pack(s.coefficients)))) < 1e-10


def test_every_branch_matches_pointwise_hb():
    # regression: lifting straight from degree 0 to N left the middle branch
    # on a Galerkin root that hops between branches near the support ends
    P = FgpcProblem.build(duffing_system(), BETA, 5, 8)
    res = solve_fgpc(P, initial_guess(P), DeflationConfig())
    assert len(res) == 3
    for s in res:
        for th in np.linspace(0.8, 1.2, 9):
            hb = P.hb_problem(th)
            u, _ = solve(hb, hb.pack(s.coefficients_at(th)))
            assert np.max(np.abs(hb.unpack(u)[0] - s.coefficients_at(th))) < 1e-5


def test_self_excited_solution_and_anchor():
    sys_ = vanderpol_system()
    P = FgpcProblem.build(sys_, Distribution.uniform(0.8, 1.2), 6, 3)
    g = initial_guess(P, n_periods=60)
    sol = solve_fgpc(P, g)
    assert sol.coefficients[0, 2, 0] == pytest.approx(g.anchor_value)
    np.testing.assert_array_equal(sol.coefficients[0, 2, 1:], 0.0)
    # omega decreases with mu for the van der Pol cycle
    w = sol.omega_at(np.array([0.8, 1.0, 1.2]))
    assert w[0] > w[1] > w[2]
    assert 2 * np.pi / w[1] == pytest.approx(6.6633, rel=2e-3)
    with pytest.raises(ValueError, match="self-excited"):
        from fgpc.analysis import moments_from_coefficients

        moments_from_coefficients(sol, np.linspace(0, 1, 3))


def test_json_round_trip(duffing):
    _, _, sol = duffing
    sol.label = "branch0"
    doc = json.loads(sol.to_json())
    assert doc["metadata"]["H"] == 5 and doc["metadata"]["N"] == 12 and doc["metadata"]["N_G"] == 32
    back = FgpcSolution.from_json(sol.to_json())
    t = np.linspace(0, 3, 11)
    np.testing.assert_array_equal(back.evaluate(0.9, t), sol.evaluate(0.9, t))
    assert back.label == "branch0"
    with pytest.raises(ValueError):
        FgpcSolution.from_dict({"format": "other"})


def test_guess_dimension_checked(duffing):
    P, _, _ = duffing
    with pytest.raises(ValueError, match="entries"):
        solve_fgpc(P, np.zeros(5))
    with pytest.raises(ValueError, match="entries"):
        solve_fgpc(P, Guess(np.zeros(3)))


def test_hb_guess_self_excited_anchor():
    sys_ = vanderpol_system()
    grid = FourierGrid(15, None, 1, 3)
    g = hb_guess(sys_, grid, 1.0, n_periods=60)
    assert g.omega == pytest.approx(2 * np.pi / 6.663286859, rel=1e-5)
    # window starts at a maximum of x, so x'(0) vanishes up to truncation
    P = HbProblem(sys_, grid, 1.0, anchor_value=g.anchor_value)
    c, w = P.unpack(g.unknowns)
    assert -2 * c[0, 16].imag == pytest.approx(g.anchor_value)
    dx0 = evaluate_series(differentiate(HarmonicCoefficients(c), w), w, np.array([0.0]))
    assert abs(dx0[0, 0]) < 1e-3
