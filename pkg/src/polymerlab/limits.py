"""Centering constants, limit laws and the Poisson-field sampler.

Poisson field
    Points ``(w, t, x)`` with intensity
    ``eta = alpha/2 |w|^{-1-alpha} (1{w>0} + c_minus 1{w<0}) dw dt dx``,
    restricted to the window ``|w| > eps``, ``0 < t < 1``, ``|x| < K``.

``W_beta``
    ``beta^{-1} sum (e^{beta w} - 1 - beta w) rho(t, x) + W_0``, with ``W_0`` the
    integral of ``w rho`` against the field: compensated for ``alpha in (1, 2)``,
    compensated on ``|w| <= 1`` for ``alpha = 1`` and raw for ``alpha < 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from . import disorder
from .disorder import Family, TailSpec
from .errors import DivergentMomentError, DomainError, UnsupportedRegimeError
from .polymer import stream_log_partitions

GAUSS_LIMIT_VAR = 2.0 / math.sqrt(math.pi)
GAUSS_LIMIT_SD = math.sqrt(GAUSS_LIMIT_VAR)


class Theorem(str, Enum):
    T14 = "T14"
    TGAUSS = "TGAUSS"
    THEAVY = "THEAVY"


@dataclass(frozen=True)
class CenteringSpec:
    theorem: Theorem
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "theorem", Theorem(self.theorem))
        a = self.alpha
        ok = {
            Theorem.T14: a >= 6,
            Theorem.TGAUSS: 2 < a <= 6,
            Theorem.THEAVY: 0.5 < a < 2,
        }[self.theorem]
        if not ok:
            raise UnsupportedRegimeError(f"alpha={a} is outside the range of {self.theorem.value}")

    @property
    def orders(self) -> tuple:
        """Positive-part moment orders entering the centering."""
        if self.theorem is Theorem.T14:
            return (1, 2, 3, 4)
        if self.theorem is Theorem.TGAUSS:
            return (1, 2, 3) if self.alpha > 3 else (1, 2)
        return ()


def centering_constant(spec: TailSpec, beta_n: float, n: int, cs: CenteringSpec) -> float:
    """Deterministic shift subtracted from ``log Z`` before scaling."""
    if cs.alpha != spec.alpha:
        raise DomainError("centering spec and disorder law disagree on alpha")
    if beta_n < 0:
        raise DomainError("beta_n must be nonnegative")
    if beta_n == 0:
        return 0.0
    if cs.theorem is Theorem.THEAVY:
        if spec.alpha != 1:
            return 0.0
        level = disorder.m_of_t(spec, n ** 1.5)
        return n * beta_n * disorder.truncated_mean(spec, level)
    if spec.family is Family.GAUSSIAN:
        return 0.5 * n * beta_n ** 2
    inner = disorder.mgf_neg(spec, beta_n)
    for i in cs.orders:
        if i >= spec.alpha:
            raise DivergentMomentError(f"order {i} moment diverges")
        inner += beta_n ** i * disorder.moment_plus(spec, i) / math.factorial(i)
    return n * math.log(inner)


def scaled_statistic(theorem: Theorem, log_Z: float, centering: float, beta_n: float, n: int,
                     spec: TailSpec | None = None) -> float:
    """Theorem-specific normalization of the centered ``log Z``."""
    theorem = Theorem(theorem)
    centered = log_Z - centering
    if theorem is Theorem.T14:
        return centered
    if theorem is Theorem.TGAUSS:
        return centered / (beta_n * n ** 0.25)
    return math.sqrt(n) / (beta_n * disorder.m_of_t(spec, n ** 1.5)) * centered


def gaussian_limit_cdf(x):
    """CDF of the centered normal law with variance ``2/sqrt(pi)``."""
    out = special.ndtr(np.asarray(x, dtype=float) / GAUSS_LIMIT_SD)
    return float(out) if np.ndim(x) == 0 else out


def gaussian_limit_ppf(p):
    out = GAUSS_LIMIT_SD * special.ndtri(np.asarray(p, dtype=float))
    return float(out) if np.ndim(p) == 0 else out


# Poisson field -------------------------------------------------------------

# sized so the working buffers stay in L2
_POINT_CHUNK = 1 << 14
_LOW32 = np.uint64(0xFFFFFFFF)


def _check_window(alpha, c_minus, eps, K):
    if not 0.5 < alpha < 2:
        raise UnsupportedRegimeError("the Poisson field is defined for alpha in (1/2, 2)")
    if c_minus < 0 or not eps > 0 or not K > 0:
        raise DomainError("need c_minus >= 0, eps > 0 and K > 0")


def window_mass(alpha, c_minus, eps, K, w_max=math.inf) -> float:
    """``eta`` of ``{eps < |w| <= w_max} x (0, 1) x (-K, K)``."""
    return 0.5 * (1.0 + c_minus) * (eps ** -alpha - w_max ** -alpha) * 2.0 * K


@dataclass(frozen=True)
class PoissonField:
    w: np.ndarray
    t: np.ndarray
    x: np.ndarray
    alpha: float
    c_minus: float
    eps: float
    K: float
    w_max: float = math.inf

    def __len__(self):
        return self.w.size


def _sign_split(c_minus):
    """Threshold ``q``: a point is positive when its uniform exceeds ``q``."""
    return c_minus / (1.0 + c_minus)


def _magnitude_log_uniform(u, q, alpha, eps, w_max, out):
    """Fill ``out[0]`` with ``u - q``, whose sign is the sign of ``w``, and
    ``out[1]`` with ``log v``; given the sign, ``v`` is uniform on ``(0, 1]``
    and ``|w| = eps * v^{-1/alpha}``.
    """
    d, v = out
    np.subtract(u, q, out=d)
    if q > 0:
        np.multiply(d, 1.0 / (1.0 - q), out=v)
        np.maximum(v, d * (-1.0 / q), out=v)
    else:
        np.copyto(v, d)
    if w_max < math.inf:
        # condition on |w| <= w_max: v uniform on ((eps / w_max)^alpha, 1]
        v *= -math.expm1(alpha * math.log(eps / w_max))
        np.subtract(1.0, v, out=v)
    np.log(v, out=v)


def _points(alpha, c_minus, eps, K, u, raw, w_max=math.inf):
    """Map one uniform and one raw word per point to ``(w, t, x)``."""
    d, v = np.empty(u.size), np.empty(u.size)
    _magnitude_log_uniform(u, _sign_split(c_minus), alpha, eps, w_max, (d, v))
    v *= -1.0 / alpha
    np.exp(v, out=v)
    w = np.copysign(eps * v, d)
    halves = raw.view(np.int32)
    t = (halves[1::2] + (2.0 ** 31 + 0.5)) * 2.0 ** -32
    x = K * ((halves[0::2] + 0.5) * 2.0 ** -31)
    return w, t, x


# exp() takes a slow path below about -708; rho's exponent is clamped here
_RHO_EXP_FLOOR = -700.0


def _chunk_values(alpha, c_minus, beta, eps, K, u, raw, w_max):
    """``sqrt(2 pi) * f(w) * rho(t, x)`` per point, ``f(w) = expm1(beta w) / beta`` (``w`` at 0).

    Same point map as ``_points``, fused in place.  The ``1/sqrt(2 pi)`` is
    left to the caller.
    """
    n = u.size
    d, v, r = np.empty(n), np.empty(n), np.empty(n)
    _magnitude_log_uniform(u, _sign_split(c_minus), alpha, eps, w_max, (d, v))
    v *= -1.0 / alpha
    v += math.log(beta * eps if beta > 0 else eps)
    np.exp(v, out=v)
    np.copysign(v, d, out=v)  # beta * w (or w)
    big = np.empty(0, dtype=np.intp)
    if beta > 0:
        big = np.flatnonzero(v > 600.0)
        big_bw = v[big]
        np.expm1(v, out=v)
    halves = raw.view(np.int32)
    np.add(halves[1::2], 2.0 ** 31 + 0.5, out=r)
    np.divide(2.0 ** 32, r, out=r)  # 1/t
    np.add(halves[0::2], 0.5, out=d)
    np.square(d, out=d)
    d *= r
    d *= -0.5 * K * K * 2.0 ** -62  # -x^2 / 2t
    np.maximum(d, _RHO_EXP_FLOOR, out=d)
    np.exp(d, out=d)
    np.sqrt(r, out=r)
    d *= r
    d *= v
    if big.size:
        # huge e^{beta w} against a tiny rho: combine exponents before exponentiating
        a = 2.0 ** 32 / (halves[1::2][big] + (2.0 ** 31 + 0.5))
        arg = -0.5 * K * K * 2.0 ** -62 * (halves[0::2][big] + 0.5) ** 2 * a
        d[big] = np.exp(big_bw + arg) * np.sqrt(a)
    return d


def _chunks(rng, total):
    """Point randomness in fixed-size chunks: uniforms, then raw words, per chunk."""
    for start in range(0, total, _POINT_CHUNK):
        size = min(_POINT_CHUNK, total - start)
        u = disorder.open_uniforms(rng, size)
        raw = rng.bit_generator.random_raw(size)
        yield start, u, raw


def sample_poisson_field(alpha, c_minus, eps, K, rng, w_max=math.inf) -> PoissonField:
    """Point count ``N ~ Poisson(window_mass)``, then i.i.d. points.

    ``|w| = eps U^{-1/alpha}`` with sign ``+`` w.p. ``1/(1+c_minus)``; ``t`` and
    ``x`` are uniform on ``(0, 1)`` and ``(-K, K)``.
    """
    _check_window(alpha, c_minus, eps, K)
    count = int(rng.poisson(window_mass(alpha, c_minus, eps, K, w_max)))
    parts = [_points(alpha, c_minus, eps, K, u, raw, w_max) for _, u, raw in _chunks(rng, count)]
    if not parts:
        empty = np.empty(0)
        return PoissonField(empty, empty, empty, alpha, c_minus, eps, K, w_max)
    w, t, x = (np.concatenate(p) for p in zip(*parts))
    return PoissonField(w, t, x, alpha, c_minus, eps, K, w_max)


@lru_cache(maxsize=None)
def space_mass(K: float) -> float:
    """``int_0^1 int_{-K}^{K} rho(t, x) dx dt``."""
    val, _ = integrate.quad(lambda t: math.erf(K / math.sqrt(2 * t)), 0.0, 1.0,
                            epsabs=0.0, epsrel=1e-13, limit=200)
    return val


def _expm1_minus_linear_over_sq(z):
    """``(e^z - 1 - z) / z^2`` without cancellation near 0."""
    if abs(z) < 0.1:
        return sum(z ** k / math.factorial(k + 2) for k in range(10))
    return (math.expm1(z) - z) / (z * z)


@lru_cache(maxsize=None)
def small_jump_drift(alpha, c_minus, beta, eps) -> float:
    """Mean of the per-unit-space contribution of the discarded ``|w| <= eps`` jumps."""
    total = 0.0
    if beta > 0:
        for sign, weight in ((1.0, 1.0), (-1.0, c_minus)):
            if weight == 0:
                continue
            # (e^{bw} - 1 - bw) / b * w^{-1-alpha} = b h(bw) w^{1-alpha}
            val, _ = integrate.quad(lambda w: beta * _expm1_minus_linear_over_sq(sign * beta * w), 0.0, eps,
                                    weight="alg", wvar=(1.0 - alpha, 0.0), epsabs=0.0, epsrel=1e-12)
            total += 0.5 * alpha * weight * val
    if alpha < 1:
        total += 0.5 * alpha * (1.0 - c_minus) * eps ** (1.0 - alpha) / (1.0 - alpha)
    return total


def compensator(alpha, c_minus, eps, K, w_max=math.inf) -> float:
    """``int w rho d eta`` over the part of the window that ``W_0`` compensates."""
    if alpha > 1:
        per_space = 0.5 * alpha * (1.0 - c_minus) * (eps ** (1.0 - alpha) - w_max ** (1.0 - alpha)) / (alpha - 1.0)
    elif alpha == 1:
        top = min(1.0, w_max)
        per_space = 0.5 * (1.0 - c_minus) * math.log(top / eps) if eps < top else 0.0
    else:
        per_space = 0.0
    return space_mass(K) * per_space


def _contributions(w, t, x, beta):
    """Per-point ``f(w) rho(t, x)`` with ``f(w) = w + (e^{beta w} - 1 - beta w) / beta = expm1(beta w) / beta``."""
    rho = np.exp(-x * x / (2.0 * t)) / np.sqrt(2.0 * np.pi * t)
    if beta == 0:
        return w * rho
    with np.errstate(over="ignore", invalid="ignore"):
        return np.expm1(beta * w) / beta * rho


def field_functional(field: PoissonField, beta: float, drift: bool = True) -> float:
    """``W_beta`` evaluated on a realized field."""
    a = field.alpha
    total = float(np.sum(_contributions(field.w, field.t, field.x, beta)))
    total -= compensator(a, field.c_minus, field.eps, field.K, field.w_max)
    if drift:
        total += space_mass(field.K) * small_jump_drift(a, field.c_minus, beta, field.eps)
    return total


def sample_W_batch(alpha, c_minus, beta, eps, K, count, rng, drift: bool = True,
                   w_max: float = math.inf) -> np.ndarray:
    """``count`` independent windowed draws of ``W_beta``.

    All point counts are drawn first, then the points of every field in
    order.  The mean of the discarded ``|w| <= eps`` jumps is added back when
    ``drift`` is set; their fluctuation (variance of order ``eps^{2-alpha}``)
    is not.  A draw is ``+inf`` when some ``beta * w`` overflows the exponential.
    ``w_max`` caps the jump size, which makes the variance finite.
    """
    _check_window(alpha, c_minus, eps, K)
    if beta < 0:
        raise DomainError("beta must be nonnegative")
    counts = rng.poisson(window_mass(alpha, c_minus, eps, K, w_max), size=count)
    ends = np.cumsum(counts)
    starts = ends - counts
    total = int(ends[-1]) if count else 0
    sums = np.zeros(count)
    with np.errstate(over="ignore", invalid="ignore"):
        for start, u, raw in _chunks(rng, total):
            stop = start + u.size
            vals = _chunk_values(alpha, c_minus, beta, eps, K, u, raw, w_max)
            lo = np.searchsorted(ends, start, side="right")
            hi = np.searchsorted(starts, stop, side="left")
            seg = np.clip(starts[lo:hi], start, stop) - start
            idx = np.flatnonzero(counts[lo:hi] > 0)
            if idx.size:
                sums[lo + idx] += np.add.reduceat(vals, seg[idx])
    sums *= 1.0 / (math.sqrt(2.0 * math.pi) * (beta if beta > 0 else 1.0))
    shift = -compensator(alpha, c_minus, eps, K, w_max)
    if drift:
        shift += space_mass(K) * small_jump_drift(alpha, c_minus, beta, eps)
    return sums + shift


def sample_W(alpha, c_minus, beta, eps, K, rng, drift: bool = True, w_max: float = math.inf) -> float:
    return float(sample_W_batch(alpha, c_minus, beta, eps, K, 1, rng, drift, w_max)[0])


def discarded_variance(alpha, c_minus, eps) -> float:
    """``int_{|w| <= eps} w^2 rho^2 d eta`` over the full space: the L2 size of the dropped jumps."""
    return 0.5 * alpha * (1.0 + c_minus) * eps ** (2.0 - alpha) / (2.0 - alpha) / math.sqrt(math.pi)


def window_variance(alpha, c_minus, eps, K, w_max) -> float:
    """``int w^2 rho^2 d eta`` over ``eps < |w| <= w_max``, ``|x| < K``.

    Finite only with the cap: without it ``W_0`` has infinite variance.
    """
    w_part = 0.5 * alpha * (1.0 + c_minus) * (w_max ** (2 - alpha) - eps ** (2 - alpha)) / (2 - alpha)
    val, _ = integrate.quad(lambda t: math.erf(K / math.sqrt(t)) / (2 * math.sqrt(math.pi * t)),
                            0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=200)
    return w_part * val


# stable law -----------------------------------------------------------------


def poisson_exponent_space_integral(alpha: float) -> float:
    """``int_0^1 int_R rho(t, x)^alpha / 2 dx dt = (2 pi)^{(1-alpha)/2} / ((3 - alpha) sqrt(alpha))``."""
    if not 0 < alpha < 3:
        raise DomainError("space integral needs alpha in (0, 3)")
    return (2 * math.pi) ** ((1 - alpha) / 2) / ((3 - alpha) * math.sqrt(alpha))


def space_integral_quadrature(alpha: float) -> float:
    """Two-dimensional adaptive quadrature of the same integral."""
    def inner(t):
        val, _ = integrate.quad(lambda x: 0.5 * (math.exp(-x * x / (2 * t)) / math.sqrt(2 * math.pi * t)) ** alpha,
                                -math.inf, math.inf, epsabs=0.0, epsrel=1e-13, limit=200)
        return val

    val, _ = integrate.quad(inner, 0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=200)
    return val


def _sinc_half(u):
    """``sin(u/2) / (u/2)``."""
    return 1.0 if u == 0 else math.sin(u / 2) / (u / 2)


def _sin_minus_id_over_cube(u):
    if u < 0.5:
        return sum((-1) ** (k + 1) * u ** (2 * k) / math.factorial(2 * k + 3) for k in range(8))
    return (math.sin(u) - u) / u ** 3


@lru_cache(maxsize=None)
def jump_transform(alpha: float) -> complex:
    """``int_0^inf (e^{iu} - 1 - iu chi(u)) u^{-1-alpha} du`` by quadrature.

    ``chi = 1`` for ``alpha > 1``, ``1{u <= 1}`` for ``alpha = 1`` and ``0`` below.
    """
    def q(f, a, b, **kw):
        if b == math.inf:
            # the Fourier-weighted rule on a half line needs an absolute tolerance
            return integrate.quad(f, a, b, epsabs=1e-12, limlst=200, **kw)[0]
        return integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-12, **kw)[0]

    p = -1.0 - alpha
    alg = dict(weight="alg", wvar=(1.0 - alpha, 0.0))
    # (cos u - 1) u^{-1-alpha} = -2 sin^2(u/2) / u^2 * u^{1-alpha}
    re = q(lambda u: -0.5 * _sinc_half(u) ** 2, 0.0, 1.0, **alg)
    re += q(lambda u: u ** p, 1.0, math.inf, weight="cos", wvar=1.0) - 1.0 / alpha
    # (sin u - u) u^{-1-alpha} = ((sin u - u) / u^3) * u^{2-alpha}
    im = q(_sin_minus_id_over_cube, 0.0, 1.0, weight="alg", wvar=(2.0 - alpha, 0.0))
    im += q(lambda u: u ** p, 1.0, math.inf, weight="sin", wvar=1.0)
    if alpha < 1:
        im += 1.0 / (1.0 - alpha)
    elif alpha > 1:
        im -= 1.0 / (alpha - 1.0)
    return complex(re, im)


def stable_exponent(alpha: float, c_minus: float, y, method: str = "auto"):
    """``psi(y)`` with ``E exp(i y W_0) = exp(psi(y))``.

    Closed form for ``alpha < 1``; otherwise (or with ``method="quad"``) the
    jump integral is evaluated numerically and the space integral in closed
    form, plus the logarithmic drift that appears at ``alpha = 1``.
    """
    if not 0 < alpha < 2:
        raise DomainError("stable exponent needs alpha in (0, 2)")
    y = np.asarray(y, dtype=float)
    mag = np.abs(y) ** alpha
    sgn = np.sign(y)
    space = poisson_exponent_space_integral(alpha)
    if alpha < 1 and method != "quad":
        coef = (2 * math.pi) ** ((1 - alpha) / 2) * math.cos(alpha * math.pi / 2) * math.gamma(1 - alpha) \
            / ((3 - alpha) * math.sqrt(alpha))
        out = -mag * coef * ((1 + c_minus) - 1j * sgn * (1 - c_minus) * math.tan(alpha * math.pi / 2))
    else:
        j = jump_transform(alpha)
        phi_plus = 0.5 * alpha * ((1 + c_minus) * j.real + 1j * (1 - c_minus) * j.imag)
        phi = np.where(sgn >= 0, phi_plus, np.conj(phi_plus))
        out = mag * phi * 2.0 * space
        if alpha == 1:
            with np.errstate(divide="ignore", invalid="ignore"):
                logy = np.where(y != 0, np.log(np.abs(y)), 0.0)
            # int int rho log rho dx dt = -log(2 pi) / 2
            out = out - 1j * y * 0.5 * (1 - c_minus) * (logy - 0.5 * math.log(2 * math.pi))
    return complex(out) if out.ndim == 0 else out


def stable_cf(alpha: float, c_minus: float, y, method: str = "auto"):
    return np.exp(stable_exponent(alpha, c_minus, y, method))


def she_reference_sample(beta: float, n_ref: int, rng) -> float:
    """Finite-``n`` stand-in for the log of the continuum partition function.

    Runs the polymer with Gaussian weights at ``beta_n = beta n_ref^{-1/4}`` and
    returns ``log Z - n beta_n^2 / 2``.
    """
    if n_ref < 1024:
        raise DomainError("reference length must be at least 1024")
    seed = int(rng.bit_generator.random_raw())
    beta_n = beta * n_ref ** -0.25
    raw, _ = stream_log_partitions(TailSpec.gaussian(), n_ref, seed, beta_n)
    return raw.log_Z - 0.5 * n_ref * beta_n ** 2
