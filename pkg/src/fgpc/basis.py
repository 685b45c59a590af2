"""Orthonormal polynomial chaos bases for a scalar random parameter.

The basis for each supported density comes from the Askey scheme:
Legendre for uniform, probabilists' Hermite for normal and Jacobi for the
four-parameter Beta.  Everything is driven by the three-term recurrence of
the monic orthogonal polynomials,

    pi_{n+1}(x) = (x - alpha_n) pi_n(x) - beta_n pi_{n-1}(x),

with ``beta_0 = 1`` because the densities are probability measures.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

FAMILIES = ("uniform", "normal", "beta4")


@dataclass(frozen=True)
class Distribution:
    """Scalar input density.

    ``params`` is ``(lo, hi)`` for uniform, ``(mean, std)`` for normal and
    ``(a, b, lo, hi)`` for beta4, the Beta(a, b) density stretched to
    ``[lo, hi]``.
    """

    family: str
    params: tuple

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(
                f"unsupported family {self.family!r}; supported: {', '.join(FAMILIES)}"
            )
        p = tuple(float(v) for v in self.params)
        object.__setattr__(self, "params", p)
        n_expected = {"uniform": 2, "normal": 2, "beta4": 4}[self.family]
        if len(p) != n_expected:
            raise ValueError(f"{self.family} takes {n_expected} parameters, got {len(p)}")
        if self.family == "uniform" and not p[0] < p[1]:
            raise ValueError("uniform requires lo < hi")
        if self.family == "normal" and not p[1] > 0:
            raise ValueError("normal requires std > 0")
        if self.family == "beta4":
            if not (p[0] > 0 and p[1] > 0):
                raise ValueError("beta4 shape parameters must be positive")
            if not p[2] < p[3]:
                raise ValueError("beta4 requires lo < hi")

    @classmethod
    def uniform(cls, lo, hi):
        return cls("uniform", (lo, hi))

    @classmethod
    def normal(cls, mean, std):
        return cls("normal", (mean, std))

    @classmethod
    def beta4(cls, a, b, lo, hi):
        return cls("beta4", (a, b, lo, hi))

    @property
    def support(self):
        if self.family == "uniform":
            return self.params
        if self.family == "beta4":
            return self.params[2:]
        return (-math.inf, math.inf)

    def frozen(self):
        """Equivalent ``scipy.stats`` frozen distribution."""
        p = self.params
        if self.family == "uniform":
            return stats.uniform(loc=p[0], scale=p[1] - p[0])
        if self.family == "normal":
            return stats.norm(loc=p[0], scale=p[1])
        return stats.beta(p[0], p[1], loc=p[2], scale=p[3] - p[2])

    def pdf(self, x):
        return self.frozen().pdf(x)

    def cdf(self, x):
        return self.frozen().cdf(x)

    @property
    def mean(self):
        return float(self.frozen().mean())

    def to_dict(self):
        return {"family": self.family, "params": list(self.params)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["family"], tuple(d["params"]))


def recurrence(dist, n):
    """Monic recurrence coefficients ``(alpha_j, beta_j)`` for ``j = 0..n-1``."""
    j = np.arange(n, dtype=float)
    p = dist.params
    if dist.family == "normal":
        mu, sd = p
        return np.full(n, mu), np.where(j == 0, 1.0, sd**2 * j)
    if dist.family == "uniform":
        lo, hi = p
        center, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        with np.errstate(divide="ignore", invalid="ignore"):
            beta = np.where(j == 0, 1.0, half**2 * j**2 / (4.0 * j**2 - 1.0))
        return np.full(n, center), beta
    a_shape, b_shape, lo, hi = p
    center, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    # Jacobi weight (1 - xi)^ja (1 + xi)^jb on [-1, 1] with xi = 2 (x - lo)/(hi - lo) - 1
    ja, jb = b_shape - 1.0, a_shape - 1.0
    s = ja + jb
    alpha = np.empty(n)
    beta = np.empty(n)
    for i in range(n):
        if i == 0:
            alpha[i] = (jb - ja) / (s + 2.0)
            beta[i] = 1.0
            continue
        two = 2.0 * i + s
        alpha[i] = (jb**2 - ja**2) / (two * (two + 2.0))
        if i == 1:
            beta[i] = 4.0 * (1 + ja) * (1 + jb) / ((2 + s) ** 2 * (3 + s))
        else:
            beta[i] = (
                4.0 * i * (i + ja) * (i + jb) * (i + s)
                / (two**2 * (two + 1.0) * (two - 1.0))
            )
    alpha = center + half * alpha
    beta = np.where(np.arange(n) == 0, 1.0, half**2 * beta)
    return alpha, beta


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def size(self):
        return len(self.nodes)

    def integrate(self, values):
        """Weighted sum over the first axis of `values`."""
        return np.tensordot(self.weights, np.asarray(values), axes=(0, 0))


@dataclass(frozen=True)
class StochasticBasis:
    """Orthonormal polynomials ``Phi_0..Phi_N`` for `distribution`."""

    distribution: Distribution
    N: int
    alpha: np.ndarray = field(init=False, repr=False, compare=False)
    beta: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.N < 0:
            raise ValueError(f"N must be >= 0, got {self.N}")
        a, b = recurrence(self.distribution, self.N + 1)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @property
    def size(self):
        return self.N + 1

    @property
    def normalizers(self):
        """``||pi_m||`` so that ``Phi_m = pi_m / ||pi_m||``."""
        return np.sqrt(np.cumprod(self.beta))

    def __call__(self, theta):
        return evaluate_basis(self, theta)


def build_basis(dist, N):
    return StochasticBasis(dist, int(N))


def evaluate_basis(basis, theta):
    """``[Phi_0(theta), ..., Phi_N(theta)]``; the last axis indexes degree.

    Values outside a bounded support are computed but trigger a warning.
    """
    theta = np.asarray(theta, dtype=float)
    lo, hi = basis.distribution.support
    if np.any(theta < lo) or np.any(theta > hi):
        warnings.warn("basis evaluated outside the distribution support", stacklevel=2)
    out = np.empty(theta.shape + (basis.N + 1,))
    out[..., 0] = 1.0
    if basis.N == 0:
        return out
    sb = np.sqrt(basis.beta)
    out[..., 1] = (theta - basis.alpha[0]) / sb[1]
    for n in range(1, basis.N):
        out[..., n + 1] = ((theta - basis.alpha[n]) * out[..., n] - sb[n] * out[..., n - 1]) / sb[n + 1]
    return out


def gauss_rule(basis_or_dist, n_nodes):
    """Gauss rule with `n_nodes` nodes for the density of `basis_or_dist`.

    Nodes and weights come from the symmetric tridiagonal Jacobi matrix of
    the recurrence (Golub-Welsch).  Weights sum to one.
    """
    if n_nodes < 1:
        raise ValueError(f"n_nodes must be >= 1, got {n_nodes}")
    dist = getattr(basis_or_dist, "distribution", basis_or_dist)
    a, b = recurrence(dist, n_nodes)
    try:
        nodes, vecs = linalg.eigh_tridiagonal(a, np.sqrt(b[1:]))
    except linalg.LinAlgError as exc:
        off = np.sqrt(b[1:])
        raise linalg.LinAlgError(
            f"Jacobi eigenproblem failed (n={n_nodes}, diag range "
            f"[{a.min():.3g}, {a.max():.3g}], offdiag range "
            f"[{off.min() if off.size else 0:.3g}, {off.max() if off.size else 0:.3g}])"
        ) from exc
    w = vecs[0] ** 2
    return QuadratureRule(nodes, w / w.sum())


def default_quadrature_order(N, d_nl=1):
    return max(2 * (N + 1), N + 1 + math.ceil(d_nl * N / 2) + 1)


def sample(dist, n, seed):
    """`n` i.i.d. draws from `dist`, deterministic for a given `seed`."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    p = dist.params
    if dist.family == "uniform":
        return rng.uniform(p[0], p[1], size=n)
    if dist.family == "normal":
        return rng.normal(p[0], p[1], size=n)
    return p[2] + (p[3] - p[2]) * rng.beta(p[0], p[1], size=n)
