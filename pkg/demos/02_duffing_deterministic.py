"""Deterministic Duffing oscillator: harmonic balance, deflation, continuation."""
import numpy as np

from fgpc import (
    DeflationConfig,
    DuffingParams,
    FourierGrid,
    HbProblem,
    continuation_sweep,
    deflated_solve,
    duffing_system,
    hb_guess,
    phase_shifted_guesses,
    solve,
)

system = duffing_system()  # delta 0.08, alpha 1, beta 1, gamma 0.2, Omega 1.4
grid = FourierGrid(5, n_d=1, d_nl=3)
problem = HbProblem(system, grid, theta=1.0)

# Initial guess from a time integration, then Newton
guess = hb_guess(system, grid, 1.0)
u, info = solve(problem, guess.unknowns)
print(f"Newton: {info.iterations} iterations, residual {info.residual_norm:.2e}")
print("harmonic magnitudes:", np.round(problem.coefficients(u).magnitudes()[0], 6))

# Deflation recovers the coexisting solutions at Omega = 1.4
initials = [guess.unknowns, np.zeros(problem.n_unknowns)] + phase_shifted_guesses(problem, guess.unknowns, 8)
roots = deflated_solve(problem, initials, DeflationConfig())
for r in roots:
    print("root with first-harmonic amplitude", round(problem.coefficients(r.unknowns).magnitudes()[0, 1], 6))

# Frequency response at both ends of the alpha interval
for alpha in (0.8, 1.2):
    sys_a = duffing_system(DuffingParams(alpha=alpha, Omega=0.5))
    br = continuation_sweep(HbProblem(sys_a, grid, alpha), (0.5, 2.5))
    lo, hi = br.three_solution_band()
    print(f"alpha = {alpha}: {len(br.omega)} points, three solutions for Omega in [{lo:.4f}, {hi:.4f}]")
