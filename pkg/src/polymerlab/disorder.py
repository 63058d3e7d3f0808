"""Disorder laws for the site weights.

Three families are provided:

``StandardizedTwoSidedLomax``
    Two-sided Lomax law with density proportional to ``(1 + |y|/b)^{-(1+alpha)}``,
    right branch weight ``1/(1+c_minus)`` and left branch weight
    ``c_minus/(1+c_minus)``.  For ``alpha > 2`` it is affinely standardized to
    mean 0 and variance 1; for ``1 < alpha <= 2`` it is only centered.
``ParetoOneSided``
    ``P(omega > x) = x^{-alpha}`` for ``x >= 1``.  Used for closed-form checks of
    the scale function.
``GaussianReference``
    Standard normal weights, the light-tailed reference (``alpha = inf``).

Every law here has a constant slowly varying part.  A general slowly varying
factor would enter through ``tail_cdf_bar`` and ``isf`` only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import integrate, special

from .errors import DivergentMomentError, DomainError, UnsupportedRegimeError


class Family(str, Enum):
    LOMAX = "StandardizedTwoSidedLomax"
    PARETO = "ParetoOneSided"
    GAUSSIAN = "GaussianReference"


_FAMILY_ALIASES = {
    "lomax": Family.LOMAX,
    "pareto": Family.PARETO,
    "gaussian": Family.GAUSSIAN,
}


def parse_family(name) -> Family:
    if isinstance(name, Family):
        return name
    key = str(name)
    if key.lower() in _FAMILY_ALIASES:
        return _FAMILY_ALIASES[key.lower()]
    try:
        return Family(key)
    except ValueError:
        raise DomainError(f"unknown disorder family {name!r}") from None


@dataclass(frozen=True)
class TailSpec:
    """Disorder law.

    Parameters
    ----------
    family : Family
        Distribution family.
    alpha : float
        Tail index. ``math.inf`` for the Gaussian family.
    c_minus : float
        Ratio of left to right tail mass, ``F(-x) / P(omega > x) -> c_minus``.
    scale : float
        Lomax scale ``b``.

    Attributes ``mu`` and ``s`` hold the derived standardization: a raw draw
    ``y`` is mapped to ``omega = (y - mu) / s``.
    """

    family: Family
    alpha: float
    c_minus: float = 1.0
    scale: float = 1.0
    mu: float = field(init=False, repr=False)
    s: float = field(init=False, repr=False)

    def __post_init__(self):
        fam = parse_family(self.family)
        object.__setattr__(self, "family", fam)
        alpha = float(self.alpha)
        if fam is Family.GAUSSIAN:
            alpha = math.inf
        object.__setattr__(self, "alpha", alpha)
        if not alpha > 0:
            raise DomainError("alpha must be positive")
        if self.c_minus < 0 or not math.isfinite(self.c_minus):
            raise DomainError("c_minus must be finite and nonnegative")
        if not self.scale > 0:
            raise DomainError("scale must be positive")
        if fam is Family.PARETO and self.c_minus != 0:
            object.__setattr__(self, "c_minus", 0.0)
        mu, s = 0.0, 1.0
        if fam is Family.LOMAX:
            b, wp, wm = self.scale, self.w_plus, self.w_minus
            if alpha > 1:
                mu = b * (wp - wm) / (alpha - 1)
            if alpha > 2:
                second = 2 * b * b / ((alpha - 1) * (alpha - 2))
                s = math.sqrt(second - mu * mu)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "s", s)

    @classmethod
    def lomax(cls, alpha, c_minus=1.0, scale=1.0):
        return cls(Family.LOMAX, alpha, c_minus, scale)

    @classmethod
    def pareto(cls, alpha):
        return cls(Family.PARETO, alpha, 0.0)

    @classmethod
    def gaussian(cls):
        return cls(Family.GAUSSIAN, math.inf, 1.0)

    @property
    def w_plus(self) -> float:
        return 1.0 / (1.0 + self.c_minus)

    @property
    def w_minus(self) -> float:
        return self.c_minus / (1.0 + self.c_minus)

    @property
    def kink(self) -> float:
        """Location of the density cusp in omega units."""
        if self.family is Family.LOMAX:
            return -self.mu / self.s
        if self.family is Family.PARETO:
            return 1.0
        return 0.0

    def to_dict(self) -> dict:
        alpha = None if math.isinf(self.alpha) else self.alpha
        return {"family": self.family.value, "alpha": alpha,
                "c_minus": self.c_minus, "scale": self.scale}

    @classmethod
    def from_dict(cls, d) -> "TailSpec":
        fam = parse_family(d.get("family", Family.LOMAX))
        alpha = d.get("alpha")
        if alpha is None:
            alpha = math.inf
        return cls(fam, float(alpha), float(d.get("c_minus", 1.0)),
                   float(d.get("scale", 1.0)))


def _scalar_out(x, out):
    return float(out) if np.ndim(x) == 0 else out


def tail_cdf_bar(spec: TailSpec, x):
    """``P(omega > x)``, elementwise."""
    xa = np.asarray(x, dtype=float)
    if spec.family is Family.GAUSSIAN:
        out = special.ndtr(-xa)
    elif spec.family is Family.PARETO:
        with np.errstate(divide="ignore"):
            out = np.where(xa >= 1.0, np.abs(xa) ** -spec.alpha, 1.0)
    else:
        y = spec.s * xa + spec.mu
        r = 1.0 + np.abs(y) / spec.scale
        tail = r ** -spec.alpha
        out = np.where(y >= 0, spec.w_plus * tail, 1.0 - spec.w_minus * tail)
    return _scalar_out(x, out)


def cdf(spec: TailSpec, x):
    """``P(omega <= x)``, computed directly on the left tail for accuracy."""
    xa = np.asarray(x, dtype=float)
    if spec.family is Family.GAUSSIAN:
        out = special.ndtr(xa)
    elif spec.family is Family.PARETO:
        out = np.where(xa >= 1.0, -np.expm1(-spec.alpha * np.log(np.maximum(xa, 1.0))), 0.0)
    else:
        y = spec.s * xa + spec.mu
        tail = (1.0 + np.abs(y) / spec.scale) ** -spec.alpha
        out = np.where(y >= 0, 1.0 - spec.w_plus * tail, spec.w_minus * tail)
    return _scalar_out(x, out)


def pdf(spec: TailSpec, x):
    xa = np.asarray(x, dtype=float)
    a = spec.alpha
    if spec.family is Family.GAUSSIAN:
        out = np.exp(-0.5 * xa * xa) / math.sqrt(2 * math.pi)
    elif spec.family is Family.PARETO:
        with np.errstate(divide="ignore"):
            out = np.where(xa >= 1.0, a * np.abs(xa) ** (-a - 1), 0.0)
    else:
        b = spec.scale
        y = spec.s * xa + spec.mu
        dens = (a / b) * (1.0 + np.abs(y) / b) ** (-a - 1)
        out = spec.s * dens * np.where(y >= 0, spec.w_plus, spec.w_minus)
    return _scalar_out(x, out)


def _quantile_inplace(spec, u):
    """Overwrite the uniforms ``u`` with their quantiles."""
    if spec.family is Family.GAUSSIAN:
        return special.ndtri(u, out=u)
    if spec.family is Family.PARETO:
        np.negative(u, out=u)
        np.log1p(u, out=u)
        u *= -1.0 / spec.alpha
        return np.exp(u, out=u)
    # the active branch is the one with the smaller normalized tail mass
    r = np.subtract(1.0, u)
    r *= 1.0 / spec.w_plus
    if spec.w_minus > 0:
        np.minimum(r, u * (1.0 / spec.w_minus), out=r)
    np.log(r, out=r)
    r *= -1.0 / spec.alpha
    np.expm1(r, out=r)
    r *= spec.scale / spec.s
    u -= spec.w_minus
    np.copysign(r, u, out=r)
    r -= spec.mu / spec.s
    u[...] = r
    return u


def quantile(spec: TailSpec, u):
    """Left-continuous inverse of the CDF, ``u`` in the open unit interval."""
    ua = np.array(u, dtype=float, ndmin=1)
    if np.any(~((ua > 0) & (ua < 1))):
        raise DomainError("quantile level must lie in (0, 1)")
    out = _quantile_inplace(spec, ua)
    return float(out[0]) if np.ndim(u) == 0 else out


def isf(spec: TailSpec, p):
    """Inverse survival function: smallest ``x`` with ``P(omega > x) <= p``."""
    pa = np.asarray(p, dtype=float)
    if np.any(~((pa > 0) & (pa < 1))):
        raise DomainError("tail probability must lie in (0, 1)")
    if spec.family is Family.GAUSSIAN:
        out = -special.ndtri(pa)
    elif spec.family is Family.PARETO:
        out = np.exp(-np.log(pa) / spec.alpha)
    else:
        b, a = spec.scale, spec.alpha
        wp, wm = spec.w_plus, spec.w_minus
        with np.errstate(divide="ignore", invalid="ignore"):
            y_right = b * np.expm1(-np.log(pa / wp) / a)
            y_left = -b * np.expm1(-np.log((1.0 - pa) / wm) / a) if wm > 0 else np.zeros_like(pa)
        y = np.where(pa <= wp, y_right, y_left)
        out = (y - spec.mu) / spec.s
    return _scalar_out(p, out)


_CHUNK = 1 << 14
_ONE_BITS = np.uint64(0x3FF0000000000000)


def open_uniforms(rng: np.random.Generator, count: int) -> np.ndarray:
    """Uniforms ``(k + 1/2) 2^-52`` on the open unit interval, one raw 64-bit word each.

    The top 52 bits of the word fill the mantissa of a float in [1, 2).
    """
    raw = rng.bit_generator.random_raw(count)
    raw >>= np.uint64(12)
    raw |= _ONE_BITS
    u = raw.view(np.float64)
    u -= 1.0 - 2.0 ** -53
    return u


def sample(spec: TailSpec, rng: np.random.Generator, count: int) -> np.ndarray:
    """``count`` i.i.d. draws by inverse CDF.

    Exactly one raw word is consumed per draw, so splitting a request into
    several calls reproduces the same values.
    """
    if count < 0:
        raise DomainError("count must be nonnegative")
    out = np.empty(count)
    for start in range(0, count, _CHUNK):
        stop = min(start + _CHUNK, count)
        out[start:stop] = _quantile_inplace(spec, open_uniforms(rng, stop - start))
    return out


def _isf_bisect(spec, p, tol=1e-10):
    lo, hi = -1.0, 1.0
    while tail_cdf_bar(spec, lo) <= p:
        lo *= 2.0
    while tail_cdf_bar(spec, hi) > p:
        hi *= 2.0
    while hi - lo > tol * (1.0 + abs(hi)):
        mid = 0.5 * (lo + hi)
        if tail_cdf_bar(spec, mid) > p:
            lo = mid
        else:
            hi = mid
    return hi


def m_of_t(spec: TailSpec, t: float, method: str = "closed") -> float:
    """Scale function ``m(t) = inf{x : P(omega > x) <= 1/t}``.

    ``method="bisect"`` forces the generic monotone bisection instead of the
    closed-form inverse survival function.
    """
    if not t > 1:
        raise DomainError("m(t) needs t > 1")
    if method == "bisect":
        return _isf_bisect(spec, 1.0 / t)
    return isf(spec, 1.0 / t)


class CutoffRule(str, Enum):
    HIGH_ALPHA = "HighAlpha"
    MID_LOW_ALPHA = "MidLowAlpha"


def default_eta(alpha: float) -> float:
    return min((0.5 + alpha) / 2.0, 6.0)


@dataclass(frozen=True)
class CutoffSpec:
    """Truncation level rule: ``1/beta_n`` above ``alpha = 6``, a quantile ratio below."""

    eta: float
    rule: CutoffRule

    @classmethod
    def for_alpha(cls, alpha: float, eta: float | None = None) -> "CutoffSpec":
        if alpha <= 0.5:
            raise UnsupportedRegimeError("truncation needs alpha > 1/2")
        if eta is None:
            eta = default_eta(alpha)
        if not 0.5 < eta < alpha:
            raise DomainError("eta must lie strictly inside (1/2, alpha)")
        rule = CutoffRule.HIGH_ALPHA if alpha > 6 else CutoffRule.MID_LOW_ALPHA
        return cls(float(eta), rule)


def cutoff_k(spec: TailSpec, beta_n: float, n: int, cut: CutoffSpec | None = None) -> float:
    """Truncation level ``k_n``."""
    if spec.alpha <= 0.5:
        raise UnsupportedRegimeError("truncation needs alpha > 1/2")
    if not beta_n > 0 or n < 2:
        raise DomainError("cutoff needs beta_n > 0 and n >= 2")
    if cut is None:
        cut = CutoffSpec.for_alpha(spec.alpha)
    expected = CutoffRule.HIGH_ALPHA if spec.alpha > 6 else CutoffRule.MID_LOW_ALPHA
    if cut.rule is not expected:
        raise DomainError("cutoff rule does not match alpha")
    if cut.rule is CutoffRule.HIGH_ALPHA:
        return 1.0 / beta_n
    base = n ** 1.5
    return m_of_t(spec, base * math.log(n) ** cut.eta) / (beta_n * m_of_t(spec, base))


def truncate(omega, k):
    """Zero out weights above ``k``; weights at or below ``k`` pass unchanged."""
    if np.ndim(omega) == 0:
        return omega if omega <= k else 0.0
    omega = np.asarray(omega)
    return np.where(omega <= k, omega, 0.0)


# quadrature ---------------------------------------------------------------

_EPSREL = 1e-12


def _breakpoints(spec, extra=()):
    pts = {0.0, spec.kink}
    if spec.family is Family.LOMAX:
        w = 10.0 * spec.scale / spec.s
        pts.update((spec.kink - w, spec.kink + w))
    elif spec.family is Family.PARETO:
        pts.add(10.0)
    else:
        pts.update((-8.0, 8.0))
    pts.update(float(p) for p in extra)
    return sorted(pts)


def expect(spec: TailSpec, func, lower=-math.inf, upper=math.inf, points=(), epsabs=0.0) -> float:
    """``E[func(omega); lower < omega <= upper]`` by adaptive quadrature.

    The range is split at the density cusp, at zero, at the family scale and
    at ``points``.  ``func`` must make the integrand integrable at infinity.
    """
    if spec.family is Family.PARETO:
        lower = max(lower, 1.0)
    if not lower < upper:
        return 0.0
    cuts = [p for p in _breakpoints(spec, points) if lower < p < upper]
    edges = [lower, *cuts, upper]

    def integrand(x):
        return func(x) * pdf(spec, x)

    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(integrand, a, b, epsabs=epsabs, epsrel=_EPSREL, limit=400)
        total += val
    return total


def _power_tail(spec, t, i):
    """``E[omega^i; omega > t]`` in closed form, for ``t`` on the right branch."""
    a = spec.alpha
    if spec.family is Family.PARETO:
        return a * t ** (i - a) / (a - i)
    b, s, mu = spec.scale, spec.s, spec.mu
    z_t = 1.0 + (s * t + mu) / b
    total = 0.0
    for j in range(i + 1):
        total += math.comb(i, j) * b ** j * (-(b + mu)) ** (i - j) * a * z_t ** (j - a) / (a - j)
    return spec.w_plus * total / s ** i


def moment_plus(spec: TailSpec, i: int) -> float:
    """``E[max(omega, 0)^i]`` for ``1 <= i < alpha``."""
    if i < 1:
        raise DomainError("moment order must be a positive integer")
    if i >= spec.alpha:
        raise DivergentMomentError(f"E[omega_+^{i}] diverges for alpha={spec.alpha}")
    if spec.family is Family.GAUSSIAN:
        return expect(spec, lambda x: x ** i, 0.0, math.inf)
    t = max(spec.kink, 0.0) + (10.0 * spec.scale / spec.s if spec.family is Family.LOMAX else 10.0)
    body = expect(spec, lambda x: x ** i, 0.0, t)
    return body + _power_tail(spec, t, i)


def _lomax_moment_plus_closed(spec: TailSpec, i: int) -> float:
    """Beta-function form of ``moment_plus`` for the Lomax family with ``mu >= 0``."""
    if spec.family is not Family.LOMAX or spec.mu < 0:
        raise UnsupportedRegimeError("closed form needs the Lomax family with c_minus <= 1")
    a, b = spec.alpha, spec.scale
    z0 = 1.0 + spec.mu / b
    raw = spec.w_plus * b ** i * a * z0 ** (i - a) * special.beta(i + 1, a - i)
    return raw / spec.s ** i


def mgf_neg(spec: TailSpec, beta: float) -> float:
    """``E[exp(-beta * max(-omega, 0))] = E[e^{beta omega}; omega < 0] + P(omega >= 0)``."""
    if beta < 0:
        raise DomainError("beta must be nonnegative")
    if beta == 0:
        return 1.0
    # the integrand lives on a layer of width ~1/beta below zero; beyond
    # 40/beta it is below e^-40 and only needs an absolute tolerance
    edge = -40.0 / beta
    neg = expect(spec, lambda x: math.exp(beta * x), edge, 0.0, points=(-1.0 / beta,))
    neg += expect(spec, lambda x: math.exp(beta * x), -math.inf, edge, epsabs=1e-18)
    return neg + tail_cdf_bar(spec, 0.0)


def lambda_trunc(spec: TailSpec, beta: float, k: float) -> float:
    """Cumulant ``log E[exp(beta * truncate(omega, k))]``."""
    if beta < 0 or not k > 0:
        raise DomainError("need beta >= 0 and k > 0")
    if beta == 0:
        return 0.0
    if spec.family is Family.GAUSSIAN and k == math.inf:
        return 0.5 * beta * beta
    excess = expect(spec, lambda x: math.expm1(beta * x), -math.inf, k, points=(k,))
    return math.log1p(excess)


def truncated_mean(spec: TailSpec, level: float) -> float:
    """``E[omega; |omega| <= level]``."""
    return expect(spec, lambda x: x, -level, level)
