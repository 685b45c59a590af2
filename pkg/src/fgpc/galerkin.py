"""Combined Fourier x polynomial-chaos Galerkin surrogates.

The surrogate is

    x(t, theta) = sum_k sum_m q_{km} exp(i k w(theta) t) Phi_m(theta)

with ``w`` fixed to the excitation frequency for forced systems and
expanded as ``w(theta) = sum_m q_{w,m} Phi_m(theta)`` for self-excited ones.
Unknowns are real: the cosine/sine amplitudes ``a_{km}``, ``b_{km}`` per
state, laid out as ``Q[state, j, m]`` with ``j`` indexing
``[a_0, a_1, b_1, ..., a_H, b_H]``.  In the self-excited case the
first-harmonic sine amplitudes of the anchor state are removed (``b_{10}``
is held at the anchor value, the rest at zero) and the frequency
coefficients are appended.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .basis import Distribution, QuadratureRule, build_basis, default_quadrature_order, evaluate_basis, gauss_rule
from .fourier import FourierGrid, from_real_layout, series_at, to_real_layout
from .hb import (
    HbProblem,
    NewtonError,
    ResidualNaNError,
    aft_residual,
    deflated_solve,
    fd_jacobian,
    newton_solve,
    phase_shifted_guesses,
)
from .systems import integrate, make_system, steady_state_fft

FORMAT = "fgpc-solution/1"


@dataclass(frozen=True)
class FgpcProblem:
    system: object
    grid: FourierGrid
    basis: object
    quad: QuadratureRule = None
    anchor_state: int = 0
    anchor_value: float = 0.0

    def __post_init__(self):
        if self.quad is None:
            n_g = default_quadrature_order(self.basis.N, self.system.d_nl)
            object.__setattr__(self, "quad", gauss_rule(self.basis, n_g))
        if self.grid.n_d != self.system.n_d:
            raise ValueError(f"grid has n_d={self.grid.n_d}, system has {self.system.n_d}")
        if self.system.self_excited and self.grid.H < 1:
            raise ValueError("self-excited problems need H >= 1")
        object.__setattr__(self, "_phi", evaluate_basis(self.basis, self.quad.nodes))

    @classmethod
    def build(cls, system, dist, H, N, n_time=None, n_quad=None, **kw):
        grid = FourierGrid(H, n_time, system.n_d, system.d_nl)
        basis = build_basis(dist, N)
        quad = gauss_rule(basis, n_quad or default_quadrature_order(N, system.d_nl))
        return cls(system, grid, basis, quad, **kw)

    @property
    def H(self):
        return self.grid.H

    @property
    def N(self):
        return self.basis.N

    @property
    def nominal_theta(self):
        """Quadrature-weighted mean of the input density."""
        return float(self.quad.weights @ self.quad.nodes)

    @property
    def tensor_shape(self):
        return (self.system.n_d, self.grid.n_harm, self.basis.size)

    @property
    def n_residual(self):
        return math.prod(self.tensor_shape)

    @property
    def n_unknowns(self):
        return self.n_residual

    def _anchor_flat(self):
        n_h, n_p = self.grid.n_harm, self.basis.size
        start = (self.anchor_state * n_h + 2) * n_p
        return np.arange(start, start + n_p)

    def unpack(self, u):
        """Real tensor ``(..., n_d, 2H+1, N+1)`` and frequency coefficients ``(..., N+1)``."""
        u = np.asarray(u, dtype=float)
        lead = u.shape[:-1]
        n_p = self.basis.size
        if self.system.self_excited:
            qw = u[..., -n_p:]
            rest = u[..., :-n_p]
            fill = np.zeros(n_p)
            fill[0] = self.anchor_value
            full = np.insert(rest, np.full(n_p, self._anchor_flat()[0]), fill, axis=-1)
        else:
            qw = None
            full = u
        return full.reshape(lead + self.tensor_shape), qw

    def pack(self, Q, q_omega=None):
        v = np.asarray(Q, dtype=float).reshape(-1)
        if not self.system.self_excited:
            return v.copy()
        return np.concatenate([np.delete(v, self._anchor_flat()), np.asarray(q_omega, dtype=float)])

    def node_coefficients(self, u):
        """Complex Fourier coefficients at each node, ``(..., N_G, n_d, 2H+1)``, and ``w`` ``(..., N_G)``."""
        Q, qw = self.unpack(u)
        V = np.einsum("...cjm,zm->...zcj", Q, self._phi)
        c = from_real_layout(V)
        if qw is None:
            omega = np.full(c.shape[:-2], self.system.forcing_frequency)
        else:
            omega = qw @ self._phi.T
        return c, omega

    def residual(self, u):
        """Galerkin residual ``sum_z w_z (r_F(q, theta_z) (x) Phi(theta_z))``, flattened."""
        u = np.asarray(u, dtype=float)
        lead = u.shape[:-1]
        c, omega = self.node_coefficients(u.reshape(-1, u.shape[-1]))
        B, Z = c.shape[:2]
        theta = np.broadcast_to(self.quad.nodes, (B, Z)).reshape(-1)
        try:
            rc = aft_residual(self.system, self.grid, c.reshape((B * Z,) + c.shape[2:]),
                              omega.reshape(-1), theta)
        except ResidualNaNError as exc:
            raise ResidualNaNError(f"{exc} (quadrature node index = batch mod {Z})") from None
        R = to_real_layout(rc).reshape(B, Z, *self.tensor_shape[:2])
        out = np.einsum("bzcj,z,zm->bcjm", R, self.quad.weights, self._phi)
        return out.reshape(lead + (self.n_residual,))

    def jacobian(self, u, r0=None):
        return fd_jacobian(self.residual, u, r0, batched=True)

    def with_anchor(self, value):
        return replace(self, anchor_value=float(value))

    def hb_problem(self, theta=None):
        """Deterministic problem at `theta` (nominal by default) on the same grid."""
        return HbProblem(self.system, self.grid, self.nominal_theta if theta is None else theta,
                         self.anchor_state, self.anchor_value)

    def lift(self, hb_unknowns):
        """Degree-0 embedding of a deterministic solution."""
        hb = self.hb_problem()
        c, omega = hb.unpack(hb_unknowns)
        Q = np.zeros(self.tensor_shape)
        Q[..., 0] = to_real_layout(c)
        qw = None
        if self.system.self_excited:
            qw = np.zeros(self.basis.size)
            qw[0] = float(omega)
        return self.pack(Q, qw)


def assemble_fgpc_residual(problem, unknowns):
    return problem.residual(unknowns)


# --- initial guesses ---------------------------------------------------------


@dataclass
class Guess:
    unknowns: np.ndarray
    anchor_value: float = 0.0
    omega: float | None = None


def settle(system, theta, x0=None, n_periods=300, tol=1e-9, chunk=100.0):
    """Integrate until quasi-stationary; returns the tail trajectory and its period.

    Forced systems run `n_periods` excitation periods.  Self-excited ones
    are first integrated over `chunk` time units to estimate the period,
    then continued to `n_periods` estimated periods in total.
    """
    from .systems import estimate_period, PeriodDetectionError

    x0 = np.asarray(system.initial_state if x0 is None else x0, dtype=float)
    if not system.self_excited:
        T = 2 * np.pi / system.forcing_frequency
        traj = integrate(system, x0, theta, (0.0, n_periods * T), tol)
        return traj, T
    t_done = 0.0
    traj = None
    for _ in range(20):
        traj = integrate(system, x0, theta, (t_done, t_done + chunk), tol)
        t_done += chunk
        x0 = traj.y[:, -1]
        try:
            T = estimate_period(traj)
            break
        except PeriodDetectionError:
            chunk *= 2
    else:
        raise PeriodDetectionError(f"no periodic motion after t = {t_done:.4g}")
    remaining = n_periods * T - t_done
    if remaining > 0:
        head = integrate(system, x0, theta, (t_done, t_done + remaining - 10 * T), tol) if remaining > 10 * T else None
        if head is not None:
            x0 = head.y[:, -1]
            t_done += remaining - 10 * T
        traj = integrate(system, x0, theta, (t_done, t_done + 10 * T), tol)
    return traj, estimate_period(traj, T)


def hb_guess(system, grid, theta, x0=None, n_periods=300, tol=1e-9):
    """Deterministic unknowns from time integration and FFT of the last period."""
    traj, T = settle(system, theta, x0, n_periods, tol)
    n_time = max(grid.n_time, 64)
    coeffs, omega = steady_state_fft(traj, T, grid.H, n_time, forced=not system.self_excited)
    c = coeffs.complex_view[: system.n_d]
    anchor = 0.0
    hb = HbProblem(system, grid, theta)
    if system.self_excited:
        anchor = float(-2.0 * c[0, grid.H + 1].imag)
        hb = replace(hb, anchor_value=anchor)
    return Guess(hb.pack(c, omega), anchor, omega)


def initial_guess(problem, x0=None, zero=False, n_periods=300):
    """Degree-0 coefficients from a time integration at the nominal parameter.

    Returns a :class:`Guess`; for self-excited systems it carries the anchor
    value and the frequency estimate.  ``zero=True`` skips the integration
    (forced systems only).
    """
    if zero:
        if problem.system.self_excited:
            raise ValueError("a zero guess carries no frequency information")
        return Guess(np.zeros(problem.n_unknowns))
    g = hb_guess(problem.system, problem.grid, problem.nominal_theta, x0, n_periods)
    p = problem.with_anchor(g.anchor_value)
    return Guess(p.lift(g.unknowns), g.anchor_value, g.omega)


# --- solutions ---------------------------------------------------------------


@dataclass
class FgpcSolution:
    """Converged surrogate: ``coefficients[state, j, m]`` in cosine/sine layout."""

    coefficients: np.ndarray
    distribution: Distribution
    H: int
    N: int
    n_time: int
    n_quad: int
    system_name: str
    system_parameters: dict
    uncertain: str | None
    forcing_frequency: float | None = None
    omega_coefficients: np.ndarray | None = None
    anchor_state: int = 0
    anchor_value: float = 0.0
    residual_norm: float = math.nan
    iterations: int = 0
    label: str = ""
    _basis: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.omega_coefficients is not None:
            self.omega_coefficients = np.asarray(self.omega_coefficients, dtype=float)
        if self._basis is None:
            self._basis = build_basis(self.distribution, self.N)

    @classmethod
    def from_unknowns(cls, problem, u, info=None, label=""):
        Q, qw = problem.unpack(u)
        s = problem.system
        return cls(
            Q.copy(), problem.basis.distribution, problem.H, problem.N, problem.grid.n_time,
            problem.quad.size, s.name, dict(s.parameters), s.uncertain, s.forcing_frequency,
            None if qw is None else qw.copy(), problem.anchor_state, problem.anchor_value,
            float(info.residual_norm) if info else math.nan, int(info.iterations) if info else 0,
            label,
        )

    @property
    def self_excited(self):
        return self.forcing_frequency is None

    @property
    def n_d(self):
        return self.coefficients.shape[0]

    @property
    def basis(self):
        return self._basis

    @property
    def complex_coefficients(self):
        """``q[state, k + H, m]`` for ``k = -H..H``."""
        return np.moveaxis(from_real_layout(np.moveaxis(self.coefficients, -1, 0)), 0, -1)

    def coefficients_at(self, theta):
        """Complex Fourier coefficients ``(..., n_d, 2H+1)`` at parameter values."""
        phi = evaluate_basis(self.basis, theta)
        return from_real_layout(np.einsum("cjm,...m->...cj", self.coefficients, phi))

    def omega_at(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.omega_coefficients is None:
            return np.full(theta.shape, self.forcing_frequency)
        return evaluate_basis(self.basis, theta) @ self.omega_coefficients

    def evaluate(self, theta, times):
        """``x(t, theta)``; shape ``theta.shape + (n_d, len(times))``."""
        c = self.coefficients_at(theta)
        if not self.self_excited:
            return series_at(c, self.forcing_frequency, times)
        return series_at(c, np.asarray(self.omega_at(theta))[..., None], times)

    def evaluate_phase(self, theta, phases):
        """Evaluate on normalised time ``tau = w(theta) t`` in ``[0, 2 pi]``."""
        c = self.coefficients_at(theta)
        return series_at(c, 1.0, phases)

    def velocity_at(self, theta, times):
        """``dx/dt`` in physical time."""
        c = self.coefficients_at(theta)
        w = np.asarray(self.omega_at(theta))[..., None, None]
        k = np.arange(-self.H, self.H + 1)
        if not self.self_excited:
            return series_at(c * 1j * k * w, self.forcing_frequency, times)
        return series_at(c * 1j * k * w, w[..., 0], times)

    @property
    def period(self):
        if self.self_excited:
            return 2 * np.pi / self.omega_coefficients[0]
        return 2 * np.pi / self.forcing_frequency

    # --- serialisation

    def to_dict(self):
        return {
            "format": FORMAT,
            "metadata": {
                "system": self.system_name,
                "parameters": self.system_parameters,
                "uncertain": self.uncertain,
                "forcing_frequency": self.forcing_frequency,
                "H": self.H,
                "N": self.N,
                "N_t": self.n_time,
                "N_G": self.n_quad,
                "distribution": self.distribution.to_dict(),
                "anchor": {"state": self.anchor_state, "value": self.anchor_value},
                "label": self.label,
                "residual_norm": self.residual_norm,
                "iterations": self.iterations,
                "layout": "coefficients[state][j][m], j over [a_0, a_1, b_1, ..., a_H, b_H]",
            },
            "data": {
                "coefficients": self.coefficients.tolist(),
                "omega_coefficients": None if self.omega_coefficients is None
                else self.omega_coefficients.tolist(),
            },
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != FORMAT:
            raise ValueError(f"not an {FORMAT} document")
        m, data = d["metadata"], d["data"]
        return cls(
            np.array(data["coefficients"]), Distribution.from_dict(m["distribution"]),
            m["H"], m["N"], m["N_t"], m["N_G"], m["system"], m["parameters"], m["uncertain"],
            m["forcing_frequency"],
            None if data["omega_coefficients"] is None else np.array(data["omega_coefficients"]),
            m["anchor"]["state"], m["anchor"]["value"], m["residual_norm"], m["iterations"],
            m.get("label", ""),
        )

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))

    def problem(self):
        """Rebuild the problem this solution solves (registered systems only)."""
        sys = make_system(self.system_name, self.system_parameters, self.uncertain)
        return FgpcProblem.build(sys, self.distribution, self.H, self.N, self.n_time,
                                 self.n_quad, anchor_state=self.anchor_state,
                                 anchor_value=self.anchor_value)


@dataclass
class FgpcSolutionSet:
    solutions: list
    failures: list = field(default_factory=list)

    def __len__(self):
        return len(self.solutions)

    def __iter__(self):
        return iter(self.solutions)

    def __getitem__(self, i):
        return self.solutions[i]


def _amplitude(sol):
    return float(np.max(np.hypot(sol.coefficients[:, 1, 0], sol.coefficients[:, 2, 0])))


def solve_fgpc(problem, guess, deflation=None, max_solutions=10, tol=1e-10, max_iter=50,
               n_phase_shifts=8):
    """Solve the Galerkin system from `guess`.

    Without `deflation` this is a Newton solve returning one
    :class:`FgpcSolution`.  With deflation, the degree-0 problem is solved
    first with deflated Newton from `guess`, the zero vector (forced systems)
    and phase-shifted copies of `guess`; every degree-0 root is then raised
    to degree N one degree at a time, solving at each step.  The result is an
    :class:`FgpcSolutionSet` ordered by decreasing first-harmonic amplitude;
    failed branches are recorded in ``failures``.
    """
    if isinstance(guess, Guess):
        problem = problem.with_anchor(guess.anchor_value)
        u0 = guess.unknowns
    else:
        u0 = np.asarray(guess, dtype=float)
    if len(u0) != problem.n_unknowns:
        raise ValueError(f"guess has {len(u0)} entries, layout needs {problem.n_unknowns}")

    if deflation is None:
        u, info = newton_solve(problem.residual, u0, tol, max_iter,
                               jacobian=lambda v, r: problem.jacobian(v, r))
        return FgpcSolution.from_unknowns(problem, u, info)

    p0 = replace(problem, basis=build_basis(problem.basis.distribution, 0))
    g0 = _degree0(problem, p0, u0)
    hb0 = p0.hb_problem()
    initials = [g0]
    if not problem.system.self_excited:
        initials.append(np.zeros_like(g0))
    if n_phase_shifts > 1:
        initials += phase_shifted_guesses(hb0, g0, n_phase_shifts)
    roots = deflated_solve(p0, initials, deflation, max_solutions, tol, max_iter)
    out = FgpcSolutionSet([], list(roots.failures))
    for i, root in enumerate(roots):
        try:
            if problem.N == 0:
                u, info = root.unknowns, root
            else:
                u, info = _raise_degree(problem, root.unknowns, tol, max_iter)
        except (NewtonError, ResidualNaNError, np.linalg.LinAlgError) as exc:
            out.failures.append({"branch": i, "error": str(exc)})
            continue
        if any(np.linalg.norm(u - problem.pack(s.coefficients, s.omega_coefficients))
               <= deflation.radius * (1 + np.linalg.norm(u)) for s in out.solutions):
            out.failures.append({"branch": i, "error": "lifted branch converged onto a known branch"})
            continue
        out.solutions.append(FgpcSolution.from_unknowns(problem, u, info))
    out.solutions.sort(key=_amplitude, reverse=True)
    for j, s in enumerate(out.solutions):
        s.label = f"branch{j}"
    return out


def _raise_degree(problem, u0, tol, max_iter):
    """Carry a degree-0 root up to ``problem.N`` one degree at a time.

    Each step pads the previous solution with zero coefficients.  Jumping
    straight from degree 0 to N lets Newton settle on Galerkin roots whose
    node values hop between branches near the ends of the support; the
    stepped path stays on the branch the degree-0 root belongs to.
    """
    dist = problem.basis.distribution
    prev = replace(problem, basis=build_basis(dist, 0))
    u, info = u0, None
    for n in range(1, problem.N + 1):
        cur = problem if n == problem.N else replace(problem, basis=build_basis(dist, n))
        Q, qw = prev.unpack(u)
        Qn = np.zeros(cur.tensor_shape)
        Qn[..., :n] = Q
        qn = None
        if qw is not None:
            qn = np.zeros(n + 1)
            qn[:n] = qw
        u, info = newton_solve(cur.residual, cur.pack(Qn, qn), tol, max_iter,
                               jacobian=lambda v, r, cur=cur: cur.jacobian(v, r))
        prev = cur
    if info.iterations == 0:
        # the padded guess already met `tol`; one more step fills in the
        # top-degree coefficients that sit below the tolerance
        r = problem.residual(u)
        u_new = u + np.linalg.solve(problem.jacobian(u, r), -r)
        r_new = problem.residual(u_new)
        if np.max(np.abs(r_new)) < np.max(np.abs(r)):
            u = u_new
            info.residual_norm = float(np.max(np.abs(r_new)))
            info.iterations = 1
    return u, info


def _degree0(problem, p0, u):
    Q, qw = problem.unpack(u)
    return p0.pack(Q[..., :1], None if qw is None else qw[:1])


def evaluate_surrogate(solution, theta, times):
    return solution.evaluate(theta, times)
