"""Discrete Fourier machinery for alternating frequency/time harmonic balance.

Coefficients are stored in complex form, ``x_H(t) = sum_{k=-H}^{H} c_k exp(i k w t)``,
as an array of shape ``(..., n_d, 2H+1)`` whose last axis runs over
``k = -H, ..., H``.  The real cosine/sine view uses

    x_H(t) = a_0 + sum_{k>=1} a_k cos(k w t) + b_k sin(k w t)

so that ``c_0 = a_0`` and ``c_{-k} = (a_k + i b_k) / 2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Array shape does not match the grid it is used with."""

    def __init__(self, what, expected, actual):
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected shape {expected}, got {actual}")


def next_pow2(n):
    return 1 << max(int(n) - 1, 0).bit_length()


def default_n_time(H, d_nl=1):
    """Oversampled sample count for a polynomial nonlinearity of degree `d_nl`.

    Products of degree `d_nl` generate harmonics up to ``d_nl * H``; the
    returned count is the smallest power of two with
    ``N_t >= max(4H + 2, 2 H d_nl + 2)``.
    """
    return next_pow2(max(4 * H + 2, 2 * H * d_nl + 2))


@dataclass(frozen=True)
class FourierGrid:
    """Equidistant phase grid over one period.

    Parameters
    ----------
    H : int
        Harmonic truncation order.
    n_time : int, optional
        Samples per period.  Must satisfy ``n_time > 2H``.  Defaults to
        :func:`default_n_time` with `d_nl`.
    n_d : int
        State dimension.
    d_nl : int
        Polynomial degree of the nonlinearity, used only for the default
        sample count.
    """

    H: int
    n_time: int | None = None
    n_d: int = 1
    d_nl: int = 1
    t_nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.H < 0:
            raise ValueError(f"H must be >= 0, got {self.H}")
        if self.n_d < 1:
            raise ValueError(f"n_d must be >= 1, got {self.n_d}")
        if self.n_time is None:
            object.__setattr__(self, "n_time", default_n_time(self.H, self.d_nl))
        if self.n_time <= 2 * self.H:
            raise ValueError(
                f"n_time={self.n_time} violates the anti-aliasing rule n_time > 2H = {2 * self.H}"
            )
        t = 2.0 * np.pi * np.arange(self.n_time) / self.n_time
        t.flags.writeable = False
        object.__setattr__(self, "t_nodes", t)

    @property
    def n_harm(self):
        return 2 * self.H + 1

    @property
    def k(self):
        return np.arange(-self.H, self.H + 1)

    def forward_matrix(self):
        """Dense ``(2H+1, N_t)`` analysis matrix, ``E*[k, j] = exp(-i k t_j) / N_t``."""
        return np.exp(-1j * np.outer(self.k, self.t_nodes)) / self.n_time

    def inverse_matrix(self):
        """Dense ``(N_t, 2H+1)`` synthesis matrix, ``E[j, k] = exp(i k t_j)``."""
        return np.exp(1j * np.outer(self.t_nodes, self.k))


@dataclass(frozen=True)
class HarmonicCoefficients:
    """Complex Fourier coefficients ``c[state, k + H]`` of a periodic signal."""

    complex_view: np.ndarray

    def __post_init__(self):
        c = np.array(self.complex_view, dtype=complex)
        if c.ndim == 1:
            c = c[None, :]
        if c.ndim != 2 or c.shape[1] % 2 != 1:
            raise ShapeError("coefficients", "(n_d, 2H+1)", c.shape)
        c.flags.writeable = False
        object.__setattr__(self, "complex_view", c)

    @property
    def H(self):
        return (self.complex_view.shape[1] - 1) // 2

    @property
    def n_d(self):
        return self.complex_view.shape[0]

    def __getitem__(self, k):
        """Coefficient vector of harmonic `k` (may be negative)."""
        return self.complex_view[:, k + self.H]

    @property
    def a(self):
        """Cosine amplitudes, shape ``(n_d, H+1)``; ``a[:, 0]`` is the mean."""
        return complex_to_cosine_sine(self.complex_view)[0]

    @property
    def b(self):
        """Sine amplitudes, shape ``(n_d, H)`` for ``k = 1..H``."""
        return complex_to_cosine_sine(self.complex_view)[1]

    @classmethod
    def from_cosine_sine(cls, a, b):
        return cls(cosine_sine_to_complex(np.atleast_2d(a), np.atleast_2d(b)))

    def to_real(self):
        return to_real_layout(self.complex_view)

    @classmethod
    def from_real(cls, vec, n_d):
        vec = np.asarray(vec, dtype=float).reshape(n_d, -1)
        return cls(from_real_layout(vec))

    def is_hermitian(self, tol=1e-12):
        c = self.complex_view
        scale = max(1.0, float(np.max(np.abs(c), initial=0.0)))
        return bool(np.max(np.abs(c - np.conj(c[:, ::-1])), initial=0.0) <= tol * scale)

    def magnitudes(self):
        """``|a_0|`` and ``sqrt(a_k^2 + b_k^2)`` per state, shape ``(n_d, H+1)``."""
        return harmonic_magnitudes(self.complex_view)


# --- array-level kernels -----------------------------------------------------
# These act on the last axis (harmonics or time samples) and broadcast over
# any leading axes, which is what the solvers use internally.


def cosine_sine_to_complex(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    H = a.shape[-1] - 1
    if b.shape[-1] != H:
        raise ShapeError("sine amplitudes", a.shape[:-1] + (H,), b.shape)
    c = np.zeros(a.shape[:-1] + (2 * H + 1,), dtype=complex)
    c[..., H] = a[..., 0]
    pos = 0.5 * (a[..., 1:] - 1j * b)
    c[..., H + 1:] = pos
    c[..., :H] = np.conj(pos)[..., ::-1]
    return c


def complex_to_cosine_sine(c):
    c = np.asarray(c)
    H = (c.shape[-1] - 1) // 2
    pos = c[..., H + 1:]
    a = np.empty(c.shape[:-1] + (H + 1,))
    a[..., 0] = c[..., H].real
    a[..., 1:] = 2.0 * pos.real
    b = -2.0 * pos.imag
    return a, b


def to_real_layout(c):
    """Interleave to ``[a_0, a_1, b_1, ..., a_H, b_H]`` along the last axis."""
    c = np.asarray(c)
    H = (c.shape[-1] - 1) // 2
    out = np.empty(c.shape[:-1] + (2 * H + 1,))
    out[..., 0] = c[..., H].real
    pos = c[..., H + 1:]
    out[..., 1::2] = 2.0 * pos.real
    out[..., 2::2] = -2.0 * pos.imag
    return out


def from_real_layout(v):
    v = np.asarray(v, dtype=float)
    H = (v.shape[-1] - 1) // 2
    c = np.empty(v.shape[:-1] + (2 * H + 1,), dtype=complex)
    c[..., H] = v[..., 0]
    pos = 0.5 * (v[..., 1::2] - 1j * v[..., 2::2])
    c[..., H + 1:] = pos
    c[..., :H] = np.conj(pos)[..., ::-1]
    return c


def harmonic_magnitudes(c):
    a, b = complex_to_cosine_sine(c)
    mag = np.abs(a)
    mag[..., 1:] = np.hypot(a[..., 1:], b)
    return mag


def fft_coefficients(samples, H):
    """Truncated DFT along the last axis: ``c_k = (1/N_t) sum_j x_j exp(-i k t_j)``."""
    samples = np.asarray(samples)
    n_time = samples.shape[-1]
    if n_time <= 2 * H:
        raise ShapeError("samples", f"(..., >{2 * H})", samples.shape)
    if np.iscomplexobj(samples):
        full = np.fft.fft(samples, axis=-1) / n_time
        idx = np.arange(-H, H + 1) % n_time
        return full[..., idx]
    half = np.fft.rfft(samples, axis=-1) / n_time
    pos = half[..., : H + 1]
    return np.concatenate([np.conj(pos[..., :0:-1]), pos], axis=-1)


def ifft_samples(c, n_time):
    """Evaluate a real truncated series at ``t_j = 2 pi j / n_time``."""
    c = np.asarray(c)
    H = (c.shape[-1] - 1) // 2
    if n_time <= 2 * H:
        raise ShapeError("grid", f"n_time > {2 * H}", n_time)
    half = np.zeros(c.shape[:-1] + (n_time // 2 + 1,), dtype=complex)
    half[..., : H + 1] = c[..., H:]
    if 2 * H == n_time:  # pragma: no cover - excluded by the anti-aliasing rule
        half[..., H] *= 2
    return np.fft.irfft(half, n=n_time, axis=-1) * n_time


def derivative_factors(H, omega):
    return 1j * np.arange(-H, H + 1) * omega


# --- public operations -------------------------------------------------------


def _check_grid_samples(samples, grid):
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.ndim != 2 or samples.shape[0] != grid.n_time:
        raise ShapeError("samples", (grid.n_time, grid.n_d), samples.shape)
    return samples


def forward_transform(samples, grid):
    """Fourier coefficients of ``samples`` (shape ``[N_t, n_d]``) on `grid`.

    Raises
    ------
    ShapeError
        If the number of rows differs from ``grid.n_time``.
    """
    samples = _check_grid_samples(samples, grid)
    return HarmonicCoefficients(fft_coefficients(samples.T, grid.H))


def inverse_transform(coeffs, grid):
    """Samples ``x_H(t_j)`` at the grid phases, shape ``[N_t, n_d]``."""
    if coeffs.H != grid.H:
        raise ShapeError("coefficients", f"H={grid.H}", f"H={coeffs.H}")
    if not coeffs.is_hermitian():
        raise ValueError("coefficients are not Hermitian; the signal would not be real")
    return ifft_samples(coeffs.complex_view, grid.n_time).T


def differentiate(coeffs, omega):
    """Coefficients of the time derivative: each ``c_k`` times ``i k omega``."""
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    return HarmonicCoefficients(coeffs.complex_view * derivative_factors(coeffs.H, omega))


def series_at(c, omega, times):
    """Dense evaluation of ``sum_k c_k exp(i k omega t)`` for arrays of coefficients.

    `c` has shape ``(..., 2H+1)``; the result has shape ``(..., len(times))``.
    `omega` may be an array broadcasting against ``c.shape[:-1]``.
    """
    c = np.asarray(c)
    H = (c.shape[-1] - 1) // 2
    times = np.asarray(times, dtype=float)
    omega = np.asarray(omega, dtype=float)[..., None]
    # only k >= 0 is needed for a real signal
    k = np.arange(1, H + 1)
    phase = omega[..., None] * k[:, None] * times  # (..., H, n_t)
    pos = c[..., H + 1:]
    out = c[..., H].real[..., None] + 2.0 * np.einsum(
        "...k,...kt->...t", pos.real, np.cos(phase)
    ) - 2.0 * np.einsum("...k,...kt->...t", pos.imag, np.sin(phase))
    return out


def evaluate_series(coeffs, omega, times):
    """Evaluate ``x_H(t)`` at arbitrary times; returns shape ``[len(times), n_d]``."""
    return series_at(coeffs.complex_view, omega, times).T
