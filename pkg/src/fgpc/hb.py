"""Deterministic harmonic balance: AFT residual, Newton, deflation, continuation."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .fourier import (
    FourierGrid,
    HarmonicCoefficients,
    fft_coefficients,
    from_real_layout,
    harmonic_magnitudes,
    ifft_samples,
    to_real_layout,
)

log = logging.getLogger(__name__)

EPS_SQRT = math.sqrt(np.finfo(float).eps)


class ResidualNaNError(FloatingPointError):
    """The system residual returned a non-finite value."""


class NewtonError(RuntimeError):
    """Newton failed; carries the last iterate and the diagnostics."""

    def __init__(self, message, iterate, info):
        super().__init__(message)
        self.iterate = iterate
        self.info = info


# --- AFT kernel --------------------------------------------------------------


def aft_residual(system, grid, coeffs, omega, theta):
    """Fourier coefficients of the time-domain residual, batched.

    Parameters
    ----------
    coeffs : complex array ``(B, n_d, 2H+1)``
    omega : array ``(B,)``
        Base angular frequency per batch entry.
    theta : array ``(B,)``

    Returns
    -------
    complex array ``(B, n_d, 2H+1)``
    """
    H, n_time = grid.H, grid.n_time
    omega = np.asarray(omega, dtype=float)
    ik = 1j * np.arange(-H, H + 1)
    w = omega[:, None, None]
    x = ifft_samples(coeffs, n_time)
    dx = ifft_samples(coeffs * (ik * w), n_time)
    ddx = ifft_samples(coeffs * (ik * w) ** 2, n_time) if system.order == 2 else None
    if system.self_excited:
        t = grid.t_nodes / w
    else:
        t = grid.t_nodes / system.forcing_frequency
    th = np.asarray(theta, dtype=float)[:, None, None]
    r = system.residual(t, th, x, dx, ddx)
    r = np.broadcast_to(r, x.shape)
    if not np.all(np.isfinite(r)):
        b, c, j = np.argwhere(~np.isfinite(r))[0]
        raise ResidualNaNError(
            f"non-finite residual of {system.name} at batch {b}, state {c}, t_{j} = {grid.t_nodes[j]:.6g}"
        )
    return fft_coefficients(r, H)


# --- problem -----------------------------------------------------------------


@dataclass(frozen=True)
class HbProblem:
    """Harmonic balance at a fixed parameter value.

    The unknown vector holds ``[a_0, a_1, b_1, ..., a_H, b_H]`` for every
    state.  For a self-excited system the first-harmonic sine amplitude of
    ``anchor_state`` is fixed at ``anchor_value`` and removed, and the base
    angular frequency is appended as the last unknown.
    """

    system: object
    grid: FourierGrid
    theta: float = None
    anchor_state: int = 0
    anchor_value: float = 0.0

    def __post_init__(self):
        if self.theta is None:
            object.__setattr__(self, "theta", self.system.nominal_theta)
        if self.grid.n_d != self.system.n_d:
            raise ValueError(f"grid has n_d={self.grid.n_d}, system has {self.system.n_d}")
        if self.system.self_excited and self.grid.H < 1:
            raise ValueError("self-excited problems need H >= 1")

    @property
    def n_real(self):
        return self.system.n_d * self.grid.n_harm

    @property
    def anchor_index(self):
        return self.anchor_state * self.grid.n_harm + 2

    @property
    def n_unknowns(self):
        return self.n_real

    def pack(self, coeffs, omega=None):
        c = coeffs.complex_view if isinstance(coeffs, HarmonicCoefficients) else np.asarray(coeffs)
        v = to_real_layout(c).reshape(-1)
        if not self.system.self_excited:
            return v
        return np.append(np.delete(v, self.anchor_index), omega)

    def unpack(self, u):
        """Return complex coefficients ``(..., n_d, 2H+1)`` and base frequency ``(...)``."""
        u = np.asarray(u, dtype=float)
        lead = u.shape[:-1]
        if self.system.self_excited:
            omega = u[..., -1]
            v = np.insert(u[..., :-1], self.anchor_index, self.anchor_value, axis=-1)
        else:
            omega = np.full(lead, self.system.forcing_frequency)
            v = u
        c = from_real_layout(v.reshape(lead + (self.system.n_d, self.grid.n_harm)))
        return c, omega

    def coefficients(self, u):
        return HarmonicCoefficients(self.unpack(u)[0])

    def residual(self, u):
        """Real residual ``(..., n_d (2H+1))``; vectorised over leading axes."""
        u = np.asarray(u, dtype=float)
        lead = u.shape[:-1]
        c, omega = self.unpack(u.reshape(-1, u.shape[-1]))
        theta = np.full(len(c), self.theta)
        r = aft_residual(self.system, self.grid, c, omega, theta)
        return to_real_layout(r).reshape(lead + (self.n_real,))

    def jacobian(self, u, r0=None):
        return fd_jacobian(self.residual, u, r0, batched=True)

    def with_theta(self, theta):
        return replace(self, theta=float(theta))


def assemble_hb_residual(problem, unknowns):
    return problem.residual(unknowns)


# --- Newton ------------------------------------------------------------------


def fd_jacobian(fun, u, r0=None, batched=False):
    """Forward-difference Jacobian with steps ``sqrt(eps) (1 + |u_i|)``."""
    u = np.asarray(u, dtype=float)
    if r0 is None:
        r0 = fun(u)
    h = EPS_SQRT * (1.0 + np.abs(u))
    if batched:
        U = u + np.diag(h)
        return ((fun(U) - r0) / h[:, None]).T
    J = np.empty((len(r0), len(u)))
    for i in range(len(u)):
        up = u.copy()
        up[i] += h[i]
        J[:, i] = (fun(up) - r0) / h[i]
    return J


@dataclass
class NewtonInfo:
    converged: bool = False
    iterations: int = 0
    residual_norm: float = math.inf
    evaluations: int = 0
    history: list = field(default_factory=list)
    message: str = ""


def newton_solve(residual_fn, initial, tol=1e-10, max_iter=50, jacobian=None,
                 check_fn=None, cond_max=1e14):
    """Damped Newton with Armijo backtracking on ``||r||^2``.

    Parameters
    ----------
    residual_fn : callable
        ``r(u)``.
    jacobian : callable, optional
        ``J(u, r)``; forward differences when omitted.
    check_fn : callable, optional
        Returns the vector whose max-norm decides convergence (defaults to
        the residual itself).  Deflated solves pass the undeflated residual.

    Returns
    -------
    u, NewtonInfo

    Raises
    ------
    NewtonError
        On a singular Jacobian or when `max_iter` is exhausted.
    """
    u = np.array(initial, dtype=float, copy=True)
    if jacobian is None:
        jacobian = lambda v, r: fd_jacobian(residual_fn, v, r)
    check_fn = check_fn or residual_fn
    info = NewtonInfo()
    r = residual_fn(u)
    info.evaluations += 1
    for it in range(max_iter + 1):
        chk = r if check_fn is residual_fn else check_fn(u)
        info.residual_norm = float(np.max(np.abs(chk)))
        info.history.append(info.residual_norm)
        if info.residual_norm < tol:
            info.converged = True
            info.iterations = it
            return u, info
        if it == max_iter:
            break
        J = jacobian(u, r)
        cond = np.linalg.cond(J)
        if not np.isfinite(cond) or cond > cond_max:
            info.iterations = it
            info.message = f"singular Jacobian (condition estimate {cond:.3g})"
            raise NewtonError(info.message, u, info)
        step = np.linalg.solve(J, -r)
        f0 = float(r @ r)
        lam = 1.0
        while True:
            u_try = u + lam * step
            r_try = residual_fn(u_try)
            info.evaluations += 1
            f1 = float(r_try @ r_try)
            if np.isfinite(f1) and f1 <= (1.0 - 2e-4 * lam) * f0:
                break
            if lam < 1.0 / 1024:
                if not np.isfinite(f1):
                    info.iterations = it
                    info.message = "line search produced non-finite residuals"
                    raise NewtonError(info.message, u, info)
                break
            lam *= 0.5
        u, r = u_try, r_try
    info.iterations = max_iter
    info.message = f"no convergence in {max_iter} iterations (|r|_inf = {info.residual_norm:.3g})"
    raise NewtonError(info.message, u, info)


def solve(problem, initial, tol=1e-10, max_iter=50):
    """Newton on ``problem.residual`` with its batched Jacobian."""
    return newton_solve(problem.residual, initial, tol, max_iter,
                        jacobian=lambda u, r: problem.jacobian(u, r))


# --- deflation ---------------------------------------------------------------


@dataclass(frozen=True)
class DeflationConfig:
    """Shifted deflation ``D_s(q) = I / ||s - q||^p + alpha I``."""

    power: float = 2.0
    shift: float = 1.0
    radius: float = 1e-6

    def __post_init__(self):
        if not self.power > 0:
            raise ValueError("deflation power must be positive")
        if not self.shift > 0:
            raise ValueError("deflation shift must be positive")


def deflation_factor(u, roots, config):
    """Scalar product of the deflation operators and its gradient."""
    m = 1.0
    grad_log = np.zeros_like(u)
    for s in roots:
        d = u - s
        dist = float(np.linalg.norm(d))
        g = dist ** (-config.power)
        f = g + config.shift
        m *= f
        grad_log += (-config.power * dist ** (-config.power - 2) * d) / f
    return m, m * grad_log


def deflated_residual(residual_fn, roots, config):
    """``D_{s_k}(q) ... D_{s_1}(q) r(q)`` as a callable."""
    def fun(u):
        m, _ = deflation_factor(u, roots, config)
        return m * residual_fn(u)
    return fun


@dataclass
class Root:
    unknowns: np.ndarray
    residual_norm: float
    iterations: int
    initial_index: int
    stability: str | None = None


@dataclass
class SolutionSet:
    roots: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def __len__(self):
        return len(self.roots)

    def __iter__(self):
        return iter(self.roots)

    def __getitem__(self, i):
        return self.roots[i]

    @property
    def distances(self):
        U = np.array([r.unknowns for r in self.roots])
        if len(U) == 0:
            return np.zeros((0, 0))
        return np.linalg.norm(U[:, None, :] - U[None, :, :], axis=-1)


def deflated_solve(problem, initials, deflation=DeflationConfig(), max_solutions=10,
                   tol=1e-10, max_iter=50):
    """Find distinct roots of ``problem.residual`` by shifted deflation.

    Each round tries the initial guesses in order on the residual deflated
    by every root found so far; the first converged, distinct root is kept
    and the next round starts over.  The search ends when a round yields
    nothing or `max_solutions` roots are known.  Every accepted root
    satisfies the undeflated tolerance.
    """
    out = SolutionSet()
    initials = [np.asarray(g, dtype=float) for g in initials]
    if not initials:
        raise ValueError("at least one initial guess is required")
    while len(out) < max_solutions:
        found = False
        known = [r.unknowns for r in out.roots]
        for idx, guess in enumerate(initials):
            if any(np.linalg.norm(guess - s) <= deflation.radius * (1.0 + np.linalg.norm(s)) for s in known):
                out.failures.append({"round": len(out), "initial": idx, "error": "initial guess is a known root"})
                continue

            def fun(u, known=known):
                m, _ = deflation_factor(u, known, deflation)
                return m * problem.residual(u)

            def jac(u, r_defl, known=known):
                m, grad_m = deflation_factor(u, known, deflation)
                r = r_defl / m
                return m * problem.jacobian(u, r) + np.outer(r, grad_m)

            try:
                u, info = newton_solve(fun, guess, tol, max_iter, jacobian=jac,
                                       check_fn=problem.residual)
            except (NewtonError, ResidualNaNError, np.linalg.LinAlgError) as exc:
                out.failures.append({"round": len(out), "initial": idx, "error": str(exc)})
                continue
            radius = deflation.radius * (1.0 + np.linalg.norm(u))
            if any(np.linalg.norm(u - s) <= radius for s in known):
                out.failures.append({"round": len(out), "initial": idx, "error": "duplicate root"})
                continue
            out.roots.append(Root(u, info.residual_norm, info.iterations, idx))
            found = True
            break
        if not found:
            break
    return out


# --- continuation ------------------------------------------------------------


@dataclass(frozen=True)
class StepConfig:
    ds: float = 0.05
    ds_min: float = 1e-5
    ds_max: float = 0.1
    max_points: int = 5000
    tol: float = 1e-10
    max_corrector_iter: int = 12


@dataclass
class Branch:
    """Points of a traced solution branch."""

    omega: np.ndarray
    unknowns: np.ndarray
    magnitudes: np.ndarray  # (n_points, n_d, H+1)
    labels: list
    truncated: bool = False
    refined_folds: list | None = None

    @property
    def folds(self):
        """Indices where the sweep direction in the excitation frequency reverses."""
        d = np.sign(np.diff(self.omega))
        return [i + 1 for i in range(len(d) - 1) if d[i] != 0 and d[i + 1] != 0 and d[i] != d[i + 1]]

    def fold_frequencies(self):
        """Turning-point frequencies.

        Uses the values from the local re-trace done by
        :func:`continuation_sweep` when present, otherwise a parabola in
        arclength through the three coarse points around each fold.
        """
        if self.refined_folds is not None:
            return list(self.refined_folds)
        return self._coarse_folds()

    def _coarse_folds(self):
        s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(
            np.diff(np.column_stack([self.unknowns, self.omega]), axis=0), axis=1))])
        out = []
        for i in self.folds:
            coef = np.polyfit(s[i - 1:i + 2] - s[i], self.omega[i - 1:i + 2], 2)
            out.append(float(np.polyval(coef, -coef[1] / (2 * coef[0]))) if coef[0] != 0
                       else float(self.omega[i]))
        return out

    def three_solution_band(self):
        """``(lo, hi)`` frequency band between the two folds, or ``None``."""
        f = self.fold_frequencies()
        if len(f) != 2:
            return None
        lo, hi = sorted(f)
        return lo, hi

    def to_rows(self):
        rows = []
        for w, mag, lab in zip(self.omega, self.magnitudes, self.labels):
            rows.append([w, *mag.reshape(-1), lab])
        return rows


def _problem_at(problem, omega):
    sys = problem.system
    p = dict(sys.parameters)
    p["Omega"] = float(omega)
    from .systems import make_system

    new_sys = make_system(sys.name, p, sys.uncertain, sys.initial_state)
    return replace(problem, system=new_sys)


def continuation_sweep(problem, omega_range, step=StepConfig(), initial=None,
                       system_at=None):
    """Pseudo-arclength continuation in the excitation frequency.

    Tangent predictor at the start, secant predictor afterwards, Newton
    corrector on the residual plus the arclength constraint.  The step is
    halved on corrector failure and grown after quick convergence.  Sweeps
    run from ``omega_range[0]`` towards ``omega_range[1]`` (either order).

    `system_at` maps a frequency to a problem; by default registered
    systems are rebuilt with the new ``Omega``.
    """
    if problem.system.self_excited:
        raise ValueError("continuation in the excitation frequency needs a forced system")
    at = system_at or (lambda w: _problem_at(problem, w))
    w0, w1 = map(float, omega_range)
    direction = 1.0 if w1 >= w0 else -1.0
    n = problem.n_unknowns
    p0 = at(w0)
    u0 = np.zeros(n) if initial is None else np.asarray(initial, dtype=float)
    u0, _ = solve(p0, u0, step.tol)

    def full_residual(Y):
        return at(Y[-1]).residual(Y[:-1])

    # initial tangent from du/dOmega = -J^-1 dr/dOmega
    J = p0.jacobian(u0)
    h = EPS_SQRT * (1 + abs(w0))
    drdw = (at(w0 + h).residual(u0) - p0.residual(u0)) / h
    du = np.linalg.solve(J, -drdw)
    if w0 == w1:
        raise ValueError("empty frequency range")
    tangent = np.append(du, 1.0) * direction
    tangent /= np.linalg.norm(tangent)

    def correct(Y, tangent, ds):
        Yp = Y + ds * tangent

        def G(Z):
            return np.append(full_residual(Z), tangent @ (Z - Yp))

        def GJ(Z, g):
            return np.vstack([fd_jacobian(full_residual, Z, g[:-1]), tangent])

        return newton_solve(G, Yp, step.tol, step.max_corrector_iter, jacobian=GJ)

    Y = np.append(u0, w0)
    pts = [Y]
    ds = step.ds
    truncated = False
    lo, hi = min(w0, w1), max(w0, w1)
    while len(pts) < step.max_points:
        try:
            Z, info = correct(Y, tangent, ds)
        except (NewtonError, np.linalg.LinAlgError, ResidualNaNError):
            ds *= 0.5
            if ds < step.ds_min:
                warnings.warn(f"continuation step below minimum at Omega={Y[-1]:.6g}; branch truncated")
                truncated = True
                break
            continue
        new_t = Z - Y
        new_t /= np.linalg.norm(new_t)
        if new_t @ tangent < 0:  # corrector jumped back along the branch
            ds *= 0.5
            if ds < step.ds_min:
                truncated = True
                break
            continue
        tangent, Y = new_t, Z
        if not lo <= Y[-1] <= hi:
            break
        pts.append(Y)
        if info.iterations <= 3:
            ds = min(ds * 1.5, step.ds_max)
    else:
        warnings.warn(f"continuation stopped after {step.max_points} points at Omega={Y[-1]:.6g}; "
                      "branch truncated")
        truncated = True
    P = np.array(pts)
    omega, U = P[:, -1], P[:, :-1]
    c, _ = problem.unpack(U)
    mags = harmonic_magnitudes(c)
    branch = Branch(omega, U, mags, ["unknown"] * len(omega), truncated)
    branch.labels = stability_labels(branch, problem.system.n_d)
    coarse = branch._coarse_folds()
    branch.refined_folds = [_refine_fold(correct, P, i, f) for i, f in zip(branch.folds, coarse)]
    return branch


def _refine_fold(correct, P, i, fallback, n=40):
    """Re-trace the branch around fold ``i`` with ``n`` small steps.

    The extreme frequency of the fine points is polished by a parabola
    through its neighbours; on any corrector failure `fallback` is used.
    """
    sign = 1.0 if P[i, -1] > P[i - 1, -1] else -1.0
    h = (np.linalg.norm(P[i] - P[i - 1]) + np.linalg.norm(P[i + 1] - P[i])) / n
    t = (P[i] - P[i - 1]) / np.linalg.norm(P[i] - P[i - 1])
    Y = P[i - 1]
    fine = [Y]
    for _ in range(n + 2):
        try:
            Z, _ = correct(Y, t, h)
        except (NewtonError, np.linalg.LinAlgError, ResidualNaNError):
            return fallback
        nt = (Z - Y) / np.linalg.norm(Z - Y)
        if nt @ t < 0:
            return fallback
        t, Y = nt, Z
        fine.append(Y)
    w = sign * np.array([p[-1] for p in fine])
    j = int(np.argmax(w))
    if not 0 < j < len(w) - 1:
        return fallback
    # equal arclength spacing: vertex of the parabola through w[j-1], w[j], w[j+1]
    a, b, c = w[j - 1], w[j], w[j + 1]
    den = a - 2 * b + c
    shift = 0.5 * (a - c) / den if den != 0 else 0.0
    return float(sign * (b - 0.25 * (a - c) * shift))


def phase_shifted_guesses(problem, u, n):
    """Copies of `u` shifted in time by ``j T / n`` for ``j = 1..n-1``.

    Time shifts move a forced-response guess around the phase circle, which
    gives deflation fresh starting points in other basins.
    """
    c, omega = problem.unpack(u)
    k = np.arange(-problem.grid.H, problem.grid.H + 1)
    return [problem.pack(c * np.exp(1j * k * 2 * np.pi * j / n), omega) for j in range(1, n)]


def stability_labels(branch, n_d):
    """Duffing-type labelling: the segment between two folds is unstable.

    Only applied to single-degree-of-freedom branches with exactly two
    folds; everything else stays ``"unknown"``.
    """
    f = branch.folds
    n = len(branch.omega)
    if n_d != 1 or len(f) != 2:
        return ["unknown"] * n
    a, b = f
    return ["stable" if (i < a or i > b) else ("unstable" if a < i < b else "fold") for i in range(n)]
