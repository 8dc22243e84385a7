"""Closed-form quantities for excursion-set curvatures of Gaussian fields.

Hermite polynomials are the probabilists' ones, ``H_{n+1} = x H_n - n H_{n-1}``.
The first Wiener chaos of ``L_{d-k}`` is assembled from three factors: the
coefficient of the orthogonal-gradient delta (``c1``), the coefficient of the
threshold indicator and Hessian determinant (``c2``), and the integrated
covariance ``(2 pi)^d h(0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special, stats

from .covariance import (
    IsotropicCovariance,
    radial_power_integral,
    second_spectral_moment,
    spectral_density,
)
from .geometry import lkc_exact_box

SOJOURN_Q_MAX = 40


def hermite(n: int, x):
    """Probabilists' Hermite polynomial ``H_n(x)``; vectorised in ``x``."""
    if n < 0 or n > 64:
        raise ValueError("hermite order must lie in 0..64")
    x = np.asarray(x, dtype=float)
    prev, cur = np.ones_like(x), x.copy()
    if n == 0:
        return prev if prev.ndim else float(prev)
    for j in range(1, n):
        prev, cur = cur, x * cur - j * prev
    return cur if cur.ndim else float(cur)


def normalized_hermite(n_max: int, x: float) -> np.ndarray:
    """``H_n(x) / sqrt(n!)`` for ``n = 0..n_max``; stable for large orders."""
    out = np.empty(n_max + 1)
    out[0] = 1.0
    if n_max >= 1:
        out[1] = x
    for n in range(1, n_max):
        out[n + 1] = (x * out[n] - math.sqrt(n) * out[n - 1]) / math.sqrt(n + 1)
    return out


def unit_ball_volume(j: int) -> float:
    if not 0 <= j <= 32:
        raise ValueError("dimension must lie in 0..32")
    return math.pi ** (j / 2) / math.gamma(j / 2 + 1)


def flag_coefficient(m: int, n: int) -> float:
    """Flag coefficient ``omega_m / (omega_n omega_{m-n}) * binom(m, n)``."""
    if not 0 <= n <= m <= 32:
        raise ValueError("need 0 <= n <= m <= 32")
    w = unit_ball_volume
    return w(m) / (w(n) * w(m - n)) * math.comb(m, n)


def std_normal_pdf(u: float) -> float:
    return math.exp(-0.5 * u * u) / math.sqrt(2 * math.pi)


@dataclass(frozen=True)
class ChaosContext:
    """Parameters of the first-chaos computation for ``L_{d-k}`` at threshold ``u``.

    ``h0`` is the spectral density at the origin and ``l`` the free diagonal
    entry of the gradient-Hessian covariance, which cancels in the variance.
    """

    d: int
    k: int
    u: float
    lam: float
    h0: float
    l: float = 1.0

    def __post_init__(self):
        if not 0 <= self.k <= self.d:
            raise ValueError(f"slice dimension k={self.k} outside 0..{self.d}")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not self.h0 > 0:
            raise ValueError("h(0) must be positive")
        if not self.l > 0:
            raise ValueError("l must be positive")

    @classmethod
    def from_model(cls, model: IsotropicCovariance, k: int, u: float, l: float = 1.0):
        return cls(model.dimension, k, u, second_spectral_moment(model),
                   spectral_density(model, 0.0), l)

    @property
    def lkc_index(self) -> int:
        return self.d - self.k


def c1_coefficient(n1, ctx: ChaosContext) -> float:
    """Hermite coefficient of the delta on the first ``k`` gradient coordinates."""
    n1 = [int(n) for n in n1]
    if len(n1) != ctx.d or min(n1) < 0:
        raise ValueError(f"multi-index must have {ctx.d} nonnegative entries")
    if any(n1[ctx.k:]):
        return 0.0
    out = (2 * math.pi * ctx.lam) ** (-ctx.k / 2)
    for n in n1[:ctx.k]:
        if n % 2:
            return 0.0
        out *= hermite(n, 0.0) / math.factorial(n)
    return out


def c2_first_chaos(ctx: ChaosContext) -> float:
    """Projection of the indicator-times-determinant onto the field value."""
    return ctx.l * hermite(ctx.k, ctx.u) * std_normal_pdf(ctx.u) * (-ctx.lam) ** ctx.k


def first_chaos_variance(ctx: ChaosContext) -> float:
    """Variance ``V_1^k`` of the first chaos of the normalised ``L_{d-k}``.

    The product ``c1^2 c2^2`` carries ``l^2``; the integrated covariance of the
    normalised field carries ``l^{-2}``.
    """
    c1 = c1_coefficient([0] * ctx.d, ctx)
    c2 = c2_first_chaos(ctx)
    flag = flag_coefficient(ctx.d, ctx.k)
    integrated = (2 * math.pi) ** ctx.d * ctx.h0 / ctx.l**2
    return (c1 * c2 * flag) ** 2 * integrated


def mehler_covariance(n: int, rho: float, m: int | None = None) -> float:
    """``E[H_n(X) H_m(Y)]`` for standard normals with correlation ``rho``."""
    if m is not None and m != n:
        return 0.0
    if n < 0:
        raise ValueError("order must be nonnegative")
    return math.factorial(n) * rho**n


def gkf_density(j: int, u: float) -> float:
    """Gaussian Minkowski functional density ``rho_j(u)`` of the unit-variance field."""
    if j == 0:
        return float(stats.norm.sf(u))
    return (2 * math.pi) ** (-(j + 1) / 2) * hermite(j - 1, u) * math.exp(-0.5 * u * u)


def expected_lkc(model: IsotropicCovariance, sides, u: float, i: int) -> float:
    """Expected ``L_i`` of the excursion set above ``u`` over a box."""
    sides = list(sides)
    d = len(sides)
    if not 0 <= i <= d:
        raise ValueError(f"index {i} outside 0..{d}")
    lam = second_spectral_moment(model.with_dimension(d))
    box = lkc_exact_box(sides)
    return sum(flag_coefficient(i + j, j) * gkf_density(j, u) * lam ** (j / 2) * box[i + j]
               for j in range(d - i + 1))


@dataclass
class SojournSeries:
    value: float
    tail: float
    terms: np.ndarray = field(repr=False)

    @property
    def q_max(self) -> int:
        return len(self.terms)

    def partial_sums(self) -> np.ndarray:
        return np.cumsum(self.terms)


def sojourn_series(model: IsotropicCovariance, u: float, q_max: int = SOJOURN_Q_MAX) -> SojournSeries:
    """Chaos series for the limiting ``var(L_d) / |T|`` of the excursion volume.

    The indicator has Hermite coefficients ``phi(u) H_{q-1}(u) / q!``, so the
    ``q``-th term is ``phi(u)^2 H_{q-1}(u)^2 / q! * int r^q``.  The tail is the
    heuristic ``q_max`` times the last nonzero-parity term, since at ``u = 0``
    every even order vanishes.
    """
    if q_max < 1:
        raise ValueError("q_max must be >= 1")
    h = normalized_hermite(q_max - 1, u)
    phi2 = std_normal_pdf(u) ** 2
    terms = np.zeros(q_max)
    for q in range(1, q_max + 1):
        coef = phi2 * h[q - 1] ** 2 / q
        if coef == 0.0:
            continue
        terms[q - 1] = coef * radial_power_integral(model, q)
    last = terms[-2:].max() if q_max > 1 else terms[-1]
    return SojournSeries(float(terms.sum()), float(last * q_max), terms)


def sojourn_variance_series(model: IsotropicCovariance, u: float, q_max: int = SOJOURN_Q_MAX) -> float:
    return sojourn_series(model, u, q_max).value


@lru_cache(maxsize=64)
def theory_table(model: IsotropicCovariance, sides: tuple, u: float,
                 q_max: int = SOJOURN_Q_MAX) -> tuple:
    """Rows ``(u, k, V1k, gkf_mean, psi_u, lambda, h0, sojourn)`` for ``k = 0..d``.

    ``gkf_mean`` is the expected ``L_{d-k}`` over the box; ``sojourn`` is set on
    the ``k = 0`` (volume) row only.
    """
    d = len(sides)
    model = model.with_dimension(d)
    lam = second_spectral_moment(model)
    h0 = spectral_density(model, 0.0)
    psi = gkf_density(0, u)
    sojourn = sojourn_variance_series(model, u, q_max)
    rows = []
    for k in range(d + 1):
        ctx = ChaosContext(d, k, u, lam, h0)
        rows.append((u, k, first_chaos_variance(ctx), expected_lkc(model, sides, u, d - k),
                     psi, lam, h0, sojourn if k == 0 else math.nan))
    return tuple(rows)


def hermite_quadrature(n_nodes: int = 200):
    """Nodes and weights integrating against the standard normal density."""
    x, w = special.roots_hermitenorm(n_nodes)
    return x, w / math.sqrt(2 * math.pi)
