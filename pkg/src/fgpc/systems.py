"""Dynamical systems, reference oscillators and time integration.

A system supplies two views of the same dynamics:

* ``rhs(y, t, theta)`` -- first-order right-hand side used by the time
  integrator, with the state on the first axis of `y`;
* ``residual(t, theta, x, dx, ddx)`` -- the time-domain residual evaluated
  by harmonic balance on arrays of shape ``(..., n_d, N_t)``.  Second-order
  systems give their natural residual in ``x``, ``dx``, ``ddx`` (``ddx`` is
  ``None`` for first-order systems).

In the residual, `theta` arrives with shape ``(..., 1, 1)`` so it broadcasts
against the state arrays.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate as sp_integrate
from scipy import optimize

from .fourier import HarmonicCoefficients, fft_coefficients


class StiffnessError(RuntimeError):
    """The adaptive integrator could not advance."""


class PeriodDetectionError(RuntimeError):
    """No stable period could be extracted from a trajectory."""


@dataclass(frozen=True)
class OdeSystem:
    name: str
    n_d: int
    order: int
    d_nl: int
    rhs: Callable
    residual: Callable
    forcing_frequency: float | None = None
    parameters: dict = field(default_factory=dict)
    uncertain: str | None = None
    initial_state: tuple | None = None

    @property
    def self_excited(self):
        return self.forcing_frequency is None

    @property
    def n_state(self):
        return self.order * self.n_d

    @property
    def nominal_theta(self):
        if self.uncertain is None:
            return 0.0
        return float(self.parameters[self.uncertain])

    @classmethod
    def first_order(cls, name, n_d, rhs, d_nl=1, forcing_frequency=None, **kw):
        """Wrap a vectorised first-order ``rhs`` into a system.

        `rhs` must accept states of shape ``(n_d, ...)`` and broadcast over
        the trailing axes.
        """

        def residual(t, theta, x, dx, ddx=None):
            xs = np.moveaxis(x, -2, 0)
            t = np.asarray(t)
            t = t[..., 0, :] if t.ndim >= 2 else t
            f = rhs(xs, t, np.asarray(theta)[..., 0, :])
            return dx - np.moveaxis(np.broadcast_to(f, xs.shape), 0, -2)

        return cls(name, n_d, 1, d_nl, rhs, residual, forcing_frequency, **kw)


@dataclass(frozen=True)
class DuffingParams:
    """Mass-normalised Duffing coefficients; defaults follow the benchmark table."""

    delta: float = 0.08
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.2
    Omega: float = 1.4

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not math.isfinite(v):
                raise ValueError(f"{k} must be finite")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.Omega <= 0:
            raise ValueError("Omega must be positive")


@dataclass(frozen=True)
class VanDerPolParams:
    mu: float = 1.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive for a limit cycle to exist")


def duffing_system(params=DuffingParams(), uncertain="alpha", initial_state=(1.0, 0.0)):
    """``x'' + delta x' + alpha x + beta x^3 = gamma cos(Omega t)``.

    `uncertain` names the parameter that is replaced by ``theta``.  The
    default initial state sits in the basin of the large-amplitude response
    at the benchmark setting.
    """
    p = asdict(params)
    if uncertain is not None and uncertain not in ("delta", "alpha", "beta", "gamma"):
        raise ValueError(f"cannot treat {uncertain!r} as uncertain; choose delta, alpha, beta or gamma")

    def coeffs(theta):
        c = dict(p)
        if uncertain is not None:
            c[uncertain] = theta
        return c

    def rhs(y, t, theta):
        c = coeffs(theta)
        x, v = y[0], y[1]
        a = -c["delta"] * v - c["alpha"] * x - c["beta"] * x**3 + c["gamma"] * np.cos(c["Omega"] * t)
        return np.array([v, a])

    def residual(t, theta, x, dx, ddx):
        c = coeffs(theta)
        return (
            ddx + c["delta"] * dx + c["alpha"] * x + c["beta"] * x**3
            - c["gamma"] * np.cos(c["Omega"] * t)
        )

    return OdeSystem(
        "duffing", n_d=1, order=2, d_nl=3, rhs=rhs, residual=residual,
        forcing_frequency=params.Omega, parameters=p, uncertain=uncertain,
        initial_state=tuple(initial_state),
    )


def vanderpol_system(params=VanDerPolParams(), uncertain="mu", initial_state=(2.0, 0.0)):
    """Self-excited ``x'' - mu (1 - x^2) x' + x = 0``."""
    p = asdict(params)
    if uncertain not in (None, "mu"):
        raise ValueError("van der Pol has a single parameter 'mu'")

    def mu_of(theta):
        return p["mu"] if uncertain is None else theta

    def rhs(y, t, theta):
        x, v = y[0], y[1]
        return np.array([v, mu_of(theta) * (1 - x**2) * v - x])

    def residual(t, theta, x, dx, ddx):
        return ddx - mu_of(theta) * (1 - x**2) * dx + x

    return OdeSystem(
        "vanderpol", n_d=1, order=2, d_nl=3, rhs=rhs, residual=residual,
        forcing_frequency=None, parameters=p, uncertain=uncertain,
        initial_state=tuple(initial_state),
    )


SYSTEMS = {"duffing": (duffing_system, DuffingParams), "vanderpol": (vanderpol_system, VanDerPolParams)}


def make_system(name, parameters=None, uncertain=None, initial_state=None):
    """Build a registered system by name from a plain parameter mapping."""
    try:
        factory, param_cls = SYSTEMS[name]
    except KeyError:
        raise ValueError(f"unknown system {name!r}; registered: {', '.join(SYSTEMS)}") from None
    kw = {"uncertain": uncertain}
    if initial_state is not None:
        kw["initial_state"] = tuple(initial_state)
    return factory(param_cls(**(parameters or {})), **kw)


# --- time integration --------------------------------------------------------


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray  # (n_state, n_t)
    sol: Callable | None = None

    def __call__(self, times):
        if self.sol is not None:
            return self.sol(times)
        from scipy.interpolate import CubicSpline

        return CubicSpline(self.t, self.y, axis=1)(times)

    @classmethod
    def from_function(cls, fun, t_span, n=20001):
        t = np.linspace(*t_span, n)
        y = np.atleast_2d(fun(t))
        return cls(t, y, lambda s: np.atleast_2d(fun(np.asarray(s))))


def integrate(system, x0, theta, t_span, tol=1e-9, t_eval=None):
    """Adaptive explicit Runge-Kutta (Dormand-Prince 8(5,3)) with dense output.

    Raises
    ------
    StiffnessError
        When the step size underflows.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    x0 = np.asarray(x0 if x0 is not None else system.initial_state, dtype=float)
    res = sp_integrate.solve_ivp(
        lambda t, y: system.rhs(y, t, theta), t_span, x0, method="DOP853",
        rtol=tol, atol=tol * 1e-2, dense_output=True, t_eval=t_eval,
    )
    if res.status != 0:
        raise StiffnessError(
            f"integration of {system.name} stopped at t={res.t[-1]:.6g}: {res.message}; "
            "the problem may be stiff, try a looser tolerance or review the system"
        )
    return Trajectory(res.t, res.y, res.sol)


def _upward_crossings(traj, level, t_lo, t_hi, n_probe):
    ts = np.linspace(t_lo, t_hi, n_probe)
    xs = traj(ts)[0] - level
    idx = np.nonzero((xs[:-1] < 0) & (xs[1:] >= 0))[0]
    f = lambda s: traj(np.array([s]))[0, 0] - level
    return np.array([optimize.brentq(f, ts[i], ts[i + 1], xtol=1e-13) for i in idx])


def estimate_period(traj, period_hint=None, n_periods=20, rel_spread=1e-2):
    """Period of the first state from its upward mean-level crossings.

    The median crossing interval over the tail of the trajectory is refined
    by minimising the mismatch ``x(s) - x(s + T)`` over the last periods.
    """
    t0, t1 = traj.t[0], traj.t[-1]
    span = t1 - t0
    if period_hint is not None:
        window = min(span, (n_periods + 1) * period_hint)
    else:
        window = 0.5 * span
    lo = t1 - window
    probe = traj(np.linspace(lo, t1, 4001))[0]
    level = 0.5 * (probe.max() + probe.min())
    n_probe = max(4001, int(80 * window / period_hint) if period_hint else 20001)
    cr = _upward_crossings(traj, level, lo, t1, n_probe)
    if len(cr) < 3:
        raise PeriodDetectionError(f"only {len(cr)} level crossings found in the last {window:.4g} time units")
    dt = np.diff(cr)[-n_periods:]
    T = float(np.median(dt))
    if np.std(dt) > rel_spread * T:
        raise PeriodDetectionError(
            f"crossing intervals vary by {np.std(dt) / T:.2%} of the period; no stable periodic motion"
        )
    k = min(3, int((t1 - t0) / T) - 1)
    if k >= 1:
        s = np.linspace(t1 - (k + 1) * T, t1 - T * 1.05, 2000)
        mismatch = lambda P: float(np.mean((traj(s)[0] - traj(s + P)[0]) ** 2))
        res = optimize.minimize_scalar(mismatch, bounds=(0.99 * T, 1.01 * T), method="bounded",
                                       options={"xatol": 1e-12})
        if res.success:
            T = float(res.x)
    return T


def steady_state_fft(traj, period_hint, H, n_time=None, forced=True):
    """Fourier coefficients of the last full period of `traj`.

    For forced motion the period is `period_hint` and the window starts at
    an integer multiple of it, so phases stay locked to the excitation.
    Otherwise the period is estimated and the window starts at the last
    maximum of the first state that still leaves a full period, which puts
    the first-harmonic sine amplitude of that state near zero.

    Returns
    -------
    coeffs : HarmonicCoefficients
        One row per trajectory state.
    omega : float
        Angular base frequency of the window.
    """
    if n_time is None:
        n_time = max(64, 4 * H + 2)
    t1 = traj.t[-1]
    if forced:
        if period_hint is None:
            raise ValueError("forced extraction needs the excitation period")
        T = float(period_hint)
        start = math.floor((t1 - traj.t[0]) / T - 1 + 1e-9) * T + traj.t[0]
        if start < traj.t[0]:
            raise PeriodDetectionError("trajectory shorter than one excitation period")
    else:
        T = estimate_period(traj, period_hint)
        s = np.linspace(t1 - 2 * T, t1 - T, 4001)
        x = traj(s)[0]
        i = int(np.argmax(x))
        lo_i, hi_i = max(i - 1, 0), min(i + 1, len(s) - 1)
        res = optimize.minimize_scalar(lambda u: -traj(np.array([u]))[0, 0],
                                       bounds=(s[lo_i], s[hi_i]), method="bounded",
                                       options={"xatol": 1e-12})
        start = float(res.x) if res.success else float(s[i])
    tj = start + T * np.arange(n_time) / n_time
    samples = traj(tj)
    return HarmonicCoefficients(fft_coefficients(samples, H)), 2.0 * np.pi / T
