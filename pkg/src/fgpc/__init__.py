"""Harmonic balance combined with intrusive polynomial chaos.

Periodic responses of nonlinear oscillators with an uncertain parameter are
expanded as Fourier series in time whose coefficients are polynomial chaos
expansions in the parameter.  The package provides the Fourier and
orthogonal-polynomial building blocks, deterministic harmonic balance with
deflation and continuation, the stochastic Galerkin solver, and analysis
tools including a Monte-Carlo harmonic-balance oracle.
"""
__version__ = "0.1.0"

from .analysis import (
    CoefficientGrid,
    ErrorMap,
    Marginal,
    MonteCarloResult,
    PhasePortrait,
    StochasticSummary,
    coefficient_grid,
    compare_summaries,
    convergence_map,
    curve_area,
    marginal_at,
    mc_oracle,
    moments_from_coefficients,
    period_average_abs,
    phase_portrait,
    rms_error,
    sample_summary,
    summary_from_paths,
    surrogate_paths,
)
from .basis import (
    Distribution,
    QuadratureRule,
    StochasticBasis,
    build_basis,
    evaluate_basis,
    gauss_rule,
    sample,
)
from .fourier import (
    FourierGrid,
    HarmonicCoefficients,
    ShapeError,
    differentiate,
    evaluate_series,
    forward_transform,
    inverse_transform,
)
from .galerkin import (
    FgpcProblem,
    FgpcSolution,
    FgpcSolutionSet,
    Guess,
    assemble_fgpc_residual,
    evaluate_surrogate,
    hb_guess,
    initial_guess,
    settle,
    solve_fgpc,
)
from .hb import (
    Branch,
    DeflationConfig,
    HbProblem,
    NewtonError,
    ResidualNaNError,
    SolutionSet,
    StepConfig,
    assemble_hb_residual,
    continuation_sweep,
    deflated_solve,
    newton_solve,
    phase_shifted_guesses,
    solve,
)
from .systems import (
    DuffingParams,
    OdeSystem,
    PeriodDetectionError,
    StiffnessError,
    VanDerPolParams,
    duffing_system,
    estimate_period,
    integrate,
    make_system,
    steady_state_fft,
    vanderpol_system,
)
