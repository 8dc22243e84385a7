"""Isotropic covariance models, their radial derivatives and spectral densities.

Every model is normalised so that ``r(0) = 1``.  The spectral density uses the
convention ``r(t) = \\int_{R^d} exp(i<w, t>) h(|w|) dw`` so that
``\\int_{R^d} r = (2 pi)^d h(0)``.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special

FAMILIES = ("gaussian", "matern", "cauchy")

# default C^3 policy for the matern family
MATERN_MIN_SMOOTHNESS = 3.5


class CovarianceError(ValueError):
    """Invalid covariance parameters or an operation the model does not support."""


class SmoothnessError(CovarianceError):
    """The model is not smooth enough for the requested use."""


class HypothesisError(CovarianceError):
    """A quantity diverges because one of (H1)-(H3) fails."""


class IntegrationError(RuntimeError):
    """Numerical transform or quadrature did not converge."""


@dataclass(frozen=True)
class IsotropicCovariance:
    family: str
    length_scale: float = 1.0
    smoothness: float = MATERN_MIN_SMOOTHNESS
    tail_exponent: float = 3.0
    dimension: int = 2
    min_smoothness: float = field(default=MATERN_MIN_SMOOTHNESS, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise CovarianceError(f"unknown covariance family {self.family!r}")
        if not self.length_scale > 0:
            raise CovarianceError("length_scale must be positive")
        if not self.smoothness > 0:
            raise CovarianceError("smoothness must be positive")
        if not self.tail_exponent > 0:
            raise CovarianceError("tail_exponent must be positive")
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise CovarianceError("dimension must be an integer >= 1")

    def __call__(self, t):
        return eval_cov(self, t)

    @property
    def is_c3(self) -> bool:
        if self.family == "matern":
            return self.smoothness >= self.min_smoothness
        return True

    def with_dimension(self, d: int) -> "IsotropicCovariance":
        return IsotropicCovariance(self.family, self.length_scale, self.smoothness,
                                   self.tail_exponent, d, self.min_smoothness)

    def params(self) -> dict:
        p = {"family": self.family, "length_scale": float(self.length_scale),
             "dimension": int(self.dimension)}
        if self.family == "matern":
            p["smoothness"] = float(self.smoothness)
        if self.family == "cauchy":
            p["tail_exponent"] = float(self.tail_exponent)
        return p

    def fingerprint(self) -> bytes:
        """32-byte SHA-256 of the canonical parameter set."""
        blob = json.dumps(self.params(), sort_keys=True).encode()
        return hashlib.sha256(blob).digest()


def validate_for_lkc(model: IsotropicCovariance) -> IsotropicCovariance:
    """Reject models outside the C^3 whitelist."""
    if not model.is_c3:
        raise SmoothnessError(
            f"matern smoothness {model.smoothness} < {model.min_smoothness}: "
            "sample paths are not C^3")
    return model


# ---------------------------------------------------------------- matern

def _matern_kappa(model):
    return math.sqrt(2.0 * model.smoothness) / model.length_scale


def _g(mu, x):
    # x^mu K_|mu|(x) for x > 0, overflow-safe
    return np.exp(mu * np.log(x) - x) * special.kve(abs(mu), x)


def _matern_derivative(model, t, order):
    nu = model.smoothness
    kappa = _matern_kappa(model)
    c = 2.0 ** (1.0 - nu) / special.gamma(nu)
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    pos = t > 0
    x = kappa * t[pos]
    if order == 0:
        v = _g(nu, x)
    elif order == 1:
        v = -x * _g(nu - 1, x)
    elif order == 2:
        v = -_g(nu - 1, x) + x**2 * _g(nu - 2, x)
    elif order == 3:
        v = 3 * x * _g(nu - 2, x) - x**3 * _g(nu - 3, x)
    else:
        v = 3 * _g(nu - 2, x) - 6 * x**2 * _g(nu - 3, x) + x**4 * _g(nu - 4, x)
    out[pos] = c * kappa**order * v
    out[~pos] = _matern_at_zero(nu, kappa, order)
    return out


def _matern_at_zero(nu, kappa, order):
    if order == 0:
        return 1.0
    if order == 2:
        return -kappa**2 / (2 * (nu - 1)) if nu > 1 else -np.inf
    if order == 4:
        return 3 * kappa**4 / (4 * (nu - 1) * (nu - 2)) if nu > 2 else np.inf
    # odd orders: zero once the derivative exists, one-sided limit otherwise
    threshold = 0.5 if order == 1 else 1.5
    if nu > threshold:
        return 0.0
    if order == 1 and nu == 0.5:
        return -kappa
    return -np.inf if order == 1 else np.nan


# ---------------------------------------------------------------- cauchy

def _cauchy_derivative(model, t, order):
    a = model.tail_exponent / 2.0
    s = np.asarray(t, dtype=float) / model.length_scale
    p = 1.0 + s * s
    if order == 0:
        v = p**-a
    elif order == 1:
        v = -2 * a * s * p ** (-a - 1)
    elif order == 2:
        v = -2 * a * p ** (-a - 1) + 4 * a * (a + 1) * s**2 * p ** (-a - 2)
    elif order == 3:
        v = (12 * a * (a + 1) * s * p ** (-a - 2)
             - 8 * a * (a + 1) * (a + 2) * s**3 * p ** (-a - 3))
    else:
        v = (12 * a * (a + 1) * p ** (-a - 2)
             - 48 * a * (a + 1) * (a + 2) * s**2 * p ** (-a - 3)
             + 16 * a * (a + 1) * (a + 2) * (a + 3) * s**4 * p ** (-a - 4))
    return v / model.length_scale**order


def _gaussian_derivative(model, t, order):
    s = np.asarray(t, dtype=float) / model.length_scale
    # d^n/ds^n exp(-s^2/2) = (-1)^n He_n(s) exp(-s^2/2)
    he = special.eval_hermitenorm(order, s)
    return (-1) ** order * he * np.exp(-0.5 * s * s) / model.length_scale**order


_DERIVATIVES = {"gaussian": _gaussian_derivative, "matern": _matern_derivative,
                "cauchy": _cauchy_derivative}


def cov_radial_derivative(model: IsotropicCovariance, t, order: int):
    """Radial derivative ``d^order r / dt^order`` at ``t >= 0`` (vectorised)."""
    if order not in (0, 1, 2, 3, 4):
        raise ValueError("order must be in 0..4")
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise ValueError("t must be nonnegative")
    out = _DERIVATIVES[model.family](model, arr, order)
    if order == 0:
        out = np.where(arr == 0, 1.0, out)
    return out if np.ndim(t) else float(out)


def eval_cov(model: IsotropicCovariance, t):
    """Covariance ``r(t)``; ``r(0) == 1`` exactly."""
    return cov_radial_derivative(model, t, 0)


def second_spectral_moment(model: IsotropicCovariance) -> float:
    """``lambda = -r''(0)``, the variance of each partial derivative of the field."""
    if model.family == "matern" and model.smoothness <= 1:
        raise SmoothnessError(
            f"field not differentiable: matern smoothness {model.smoothness} <= 1")
    return -float(cov_radial_derivative(model, 0.0, 2))


# ---------------------------------------------------------------- spectra

def _sphere_area(d):
    # surface area of the unit sphere S^{d-1}
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


def _wynn_epsilon(partial_sums):
    s = list(partial_sums)
    n = len(s)
    e_prev = [0.0] * (n + 1)
    e_curr = s[:]
    best = s[-1]
    for k in range(1, n):
        e_next = []
        for i in range(len(e_curr) - 1):
            diff = e_curr[i + 1] - e_curr[i]
            if diff == 0:
                return e_curr[i + 1]
            e_next.append(e_prev[i + 1] + 1.0 / diff)
        e_prev, e_curr = e_curr, e_next
        if k % 2 == 0 and e_curr:
            best = e_curr[-1]
        if len(e_curr) < 2:
            break
    return best


def _bessel_zeros(nu, count):
    if nu == 0:
        return special.jn_zeros(0, count)
    k = np.arange(1, count + 1)
    if nu == -0.5:
        return (k - 0.5) * math.pi
    if nu == 0.5:
        return k * math.pi
    # McMahon asymptotics, adequate as partition points
    return (k + nu / 2 - 0.25) * math.pi


def _hankel_transform(radial, d, omega, segments=400):
    """``(2 pi)^{-d/2} w^{1-d/2} int_0^inf J_{d/2-1}(w t) t^{d/2} radial(t) dt``."""
    nu = d / 2 - 1

    def integrand(t):
        return special.jv(nu, omega * t) * t ** (d / 2) * radial(t)

    knots = np.concatenate([[0.0], _bessel_zeros(nu, segments) / omega])
    pieces = []
    for a, b in zip(knots[:-1], knots[1:]):
        val, _ = integrate.quad(integrand, a, b, epsabs=1e-13, epsrel=1e-11, limit=200)
        pieces.append(val)
        if len(pieces) > 20 and abs(val) < 1e-14:
            break
    partial = np.cumsum(pieces)
    if abs(pieces[-1]) < 1e-14:
        total = partial[-1]
    else:
        total = _wynn_epsilon(partial[-25:])
        check = _wynn_epsilon(partial[-27:-2])
        if not np.isfinite(total) or abs(total - check) > 1e-6 * max(1.0, abs(total)):
            raise IntegrationError(
                f"Hankel transform at w={omega} did not converge "
                f"(estimates {total!r} vs {check!r}, last segment {pieces[-1]:.3e})")
    return (2 * math.pi) ** (-d / 2) * omega ** (1 - d / 2) * total


def spectral_density(model: IsotropicCovariance, freq: float) -> float:
    """Isotropic spectral density ``h(|w|)`` in ``model.dimension`` dimensions."""
    d = model.dimension
    ell = model.length_scale
    if freq < 0:
        raise ValueError("freq must be nonnegative")
    if model.family == "gaussian":
        return (ell * ell / (2 * math.pi)) ** (d / 2) * math.exp(-0.5 * (ell * freq) ** 2)
    if model.family == "matern":
        nu = model.smoothness
        k2 = 2 * nu / ell**2
        norm = math.gamma(nu + d / 2) / (math.gamma(nu) * math.pi ** (d / 2))
        return norm * k2**nu * (k2 + freq * freq) ** (-(nu + d / 2))
    # cauchy: numeric Hankel transform
    if freq == 0:
        if model.tail_exponent <= d:
            return math.inf
        return (2 * math.pi) ** (-d) * radial_power_integral(model, 1)
    return _hankel_transform(lambda t: eval_cov(model, t), d, freq)


def inverse_spectral(model: IsotropicCovariance, t: float) -> float:
    """Recover ``r(t)`` by numerically inverting :func:`spectral_density`."""
    d = model.dimension
    if t == 0:
        val, _ = integrate.quad(lambda w: w ** (d - 1) * spectral_density(model, w),
                                0, np.inf, epsabs=1e-13, epsrel=1e-11, limit=400)
        return _sphere_area(d) * val
    # same Hankel kernel with (2 pi)^d h playing the role of the radial function
    return (2 * math.pi) ** d * _hankel_transform(
        lambda w: np.vectorize(lambda x: spectral_density(model, x))(w), d, t)


# ---------------------------------------------------------------- integrals

def _radial_integral(func, d, scale):
    """``int_{R^d} func(|t|) dt`` for a radial integrand decaying at infinity."""
    pts = scale * np.array([0.0, 1, 2, 4, 8, 16, 32, 64])
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        val, _ = integrate.quad(lambda s: s ** (d - 1) * func(s), a, b,
                                epsabs=0, epsrel=1e-12, limit=200)
        total += val
    val, _ = integrate.quad(lambda s: s ** (d - 1) * func(s), pts[-1], np.inf,
                            epsabs=0, epsrel=1e-12, limit=400)
    return _sphere_area(d) * (total + val)


def radial_power_integral(model: IsotropicCovariance, q: int) -> float:
    """``int_{R^d} r(|t|)^q dt``."""
    if q < 1:
        raise ValueError("q must be >= 1")
    d = model.dimension
    if model.family == "cauchy" and model.tail_exponent * q <= d:
        raise HypothesisError(
            f"(H2) fails: int r^{q} diverges for cauchy with tail_exponent "
            f"{model.tail_exponent} in dimension {d}")
    return _cached_power_integral(model, q)


@lru_cache(maxsize=4096)
def _cached_power_integral(model, q):
    # r^q concentrates on a radius ~ ell / sqrt(q) for the smooth families
    scale = model.length_scale / math.sqrt(q)
    return _radial_integral(lambda s: float(eval_cov(model, s)) ** q,
                            model.dimension, scale)


# ---------------------------------------------------------------- hypotheses

@dataclass
class HypothesisReport:
    h1_ok: bool
    h1_witness: float
    h2_ok: bool
    h2_witness: float
    h3_ok: bool
    h3_witness: float
    c3_ok: bool = True

    @property
    def all_ok(self) -> bool:
        return self.h1_ok and self.h2_ok and self.h3_ok and self.c3_ok

    def failing(self) -> list[str]:
        names = []
        for key, label in (("c3_ok", "C3"), ("h1_ok", "H1"), ("h2_ok", "H2"), ("h3_ok", "H3")):
            if not getattr(self, key):
                names.append(label)
        return names

    def to_dict(self) -> dict:
        return asdict(self)


def _psi(model, t):
    return max(abs(float(cov_radial_derivative(model, t, j))) for j in range(5))


def _envelope_integral(model):
    d = model.dimension
    ell = model.length_scale
    # decay exponent of the envelope far out
    r1, r2 = 1e3 * ell, 1e4 * ell
    p1, p2 = _psi(model, r1), _psi(model, r2)
    if p2 > 0:
        rate = -math.log(p2 / p1) / math.log(r2 / r1) if p1 > 0 else math.inf
        if rate <= d + 0.05:
            return math.inf
    head = 0.0
    pts = ell * np.array([0.0, 0.01, 0.1, 1, 4, 16, 64, 256, 1000])
    for a, b in zip(pts[:-1], pts[1:]):
        val, _ = integrate.quad(lambda s: s ** (d - 1) * _psi(model, s), a, b,
                                epsabs=1e-12, epsrel=1e-8, limit=200)
        head += val
    # tail bound: psi(t) <= psi(R) (R/t)^rate beyond R
    tail = 0.0
    if p1 > 0:
        rate = -math.log(p2 / p1) / math.log(r2 / r1) if p2 > 0 else 50.0
        tail = p1 * r1**d / (rate - d)
    return _sphere_area(d) * (head + tail)


def check_hypotheses(model: IsotropicCovariance) -> HypothesisReport:
    ell = model.length_scale
    ts = ell * np.logspace(-6, -2, 200)
    with np.errstate(all="ignore"):
        r2 = np.asarray(cov_radial_derivative(model, ts, 2))
        r2_0 = float(cov_radial_derivative(model, 0.0, 2))
        h1 = float(np.max(np.abs(r2 - r2_0) / ts**2)) if np.isfinite(r2_0) else math.inf
    h1_ok = bool(np.isfinite(h1))

    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        try:
            h2 = _envelope_integral(model)
        except (OverflowError, ZeroDivisionError):
            h2 = math.inf
    h2_ok = bool(np.isfinite(h2))

    try:
        h3 = float(spectral_density(model, 0.0))
    except (HypothesisError, IntegrationError):
        h3 = math.inf
    h3_ok = bool(0 < h3 < math.inf)
    return HypothesisReport(h1_ok, h1, h2_ok, h2, h3_ok, h3, c3_ok=model.is_c3)
