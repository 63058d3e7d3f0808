"""Random-walk kernels and the multilinear expansion of the partition function.

With ``q = beta * zeta = exp(beta * omega_trunc - lambda) - 1`` the normalized
truncated partition function expands exactly as

    exp(-n lambda) Z = sum over time-ordered site tuples of prod p(step) q(site),

the empty tuple contributing 1.  ``expansion_sum`` evaluates the first
``max_order`` orders by a forward recursion that carries one row per order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy import stats as sps

from . import disorder
from .disorder import Family
from .errors import CostGuardError, DomainError
from .polymer import Environment, cone_size, row_offset

FULL_ORDER_MAX_N = 12
TUPLE_SUM_MAX_N = 8


def _step(v: np.ndarray) -> np.ndarray:
    out = np.empty(v.shape[:-1] + (v.shape[-1] + 1,))
    out[..., :-1] = v
    out[..., -1] = 0.0
    out[..., 1:] += v
    out *= 0.5
    return out


def srw_rows(n: int):
    """Yield ``P(s_i = x)`` for ``i = 0 .. n`` over ``x = -i, -i+2, ..., i``."""
    row = np.ones(1)
    yield row
    for _ in range(n):
        row = _step(row)
        yield row


@dataclass(frozen=True)
class KernelTable:
    """Simple random walk probabilities ``p(i, x)`` for ``0 <= i <= n``."""

    n: int
    table: np.ndarray

    def row(self, i: int) -> np.ndarray:
        start = i * (i + 1) // 2
        return self.table[start: start + i + 1]

    def p(self, i: int, x: int) -> float:
        if i < 0 or i > self.n:
            raise DomainError("time outside the table")
        if abs(x) > i or (i + x) % 2:
            return 0.0
        return float(self.row(i)[(x + i) // 2])


def srw_kernel(n: int) -> KernelTable:
    if n < 1:
        raise DomainError("n must be at least 1")
    return KernelTable(n, np.concatenate(list(srw_rows(n))))


def srw_row(n: int) -> np.ndarray:
    """``P(s_n = x)`` for ``x = -n, ..., n`` step 2, for any ``n``.

    ``binom.pmf`` keeps full relative accuracy where naive log-gamma
    differences lose about ``log(n!) * eps``.
    """
    return sps.binom.pmf(np.arange(n + 1), n, 0.5)


def heat_kernel(t, x):
    """Gaussian density ``exp(-x^2 / 2t) / sqrt(2 pi t)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("heat kernel needs t > 0")
    out = np.exp(-np.square(x) / (2 * t)) / np.sqrt(2 * np.pi * t)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ZetaField:
    """Centered weights ``zeta = (exp(beta * omega_trunc - lam) - 1) / beta`` over the cone."""

    values: np.ndarray
    beta: float
    k: float
    lam: float

    @property
    def n(self) -> int:
        # invert cone_size(n) = n (n + 3) / 2
        return int(round((-3 + math.sqrt(9 + 8 * self.values.size)) / 2))

    @property
    def q(self) -> np.ndarray:
        return self.beta * self.values


def cumulant(spec, beta: float, k: float) -> float:
    """``lambda(beta) = log E[exp(beta * omega_trunc)]``; exact for Gaussian weights."""
    if spec.family is Family.GAUSSIAN:
        return 0.5 * beta * beta
    return disorder.lambda_trunc(spec, beta, k)


def zeta_field(env: Environment, beta: float, k: float) -> ZetaField:
    if not beta > 0 or not k > 0:
        raise DomainError("need beta > 0 and k > 0")
    lam = cumulant(env.spec, beta, k)
    w = disorder.truncate(env.omega, k)
    values = np.expm1(beta * w - lam) / beta
    return ZetaField(values, beta, k, lam)


def zeta_variance(spec, beta: float, k: float) -> float:
    """``Var(zeta) = (exp(lambda(2 beta) - 2 lambda(beta)) - 1) / beta^2``."""
    return math.expm1(cumulant(spec, 2 * beta, k) - 2 * cumulant(spec, beta, k)) / beta ** 2


def expansion_sum(zeta: ZetaField, max_order: int) -> float:
    """``1 + sum_{m=1}^{max_order} sum_{tuples of size m} prod p * q``.

    Row ``i`` carries, for each order ``m``, the mass of all order-``m``
    terms whose walk sits at ``(i, x)``; marking a site multiplies the
    order-``m - 1`` mass arriving there by ``q``.  Mass is conserved by free
    steps, so the order-``m`` total is the sum of its final row.
    """
    n = zeta.n
    if max_order < 0:
        raise DomainError("max_order must be nonnegative")
    if max_order > 2 and n > FULL_ORDER_MAX_N:
        raise CostGuardError(f"orders above 2 are limited to n <= {FULL_ORDER_MAX_N}")
    orders = min(max_order, n)
    q = zeta.q
    mass = np.zeros((orders + 1, 1))
    mass[0, 0] = 1.0
    for i in range(1, n + 1):
        mass = _step(mass)
        if orders:
            qi = q[row_offset(i): row_offset(i) + i + 1]
            mass[1:] += qi * mass[:-1]
    return float(mass.sum())


def multilinear_sum(env: Environment, beta: float, k: float, max_order: int) -> float:
    return expansion_sum(zeta_field(env, beta, k), max_order)


def expansion_sum_tuples(zeta: ZetaField, max_order: int) -> float:
    """Literal sum over time-ordered site tuples. Exponential cost, ``n <= 8``."""
    n = zeta.n
    if n > TUPLE_SUM_MAX_N:
        raise CostGuardError(f"tuple enumeration is limited to n <= {TUPLE_SUM_MAX_N}")
    kernel = srw_kernel(n)
    q = zeta.q

    def extend(i_prev, x_prev, order):
        if order == max_order:
            return 0.0
        total = 0.0
        for i in range(i_prev + 1, n + 1):
            for x in range(-i, i + 1, 2):
                step = kernel.p(i - i_prev, x - x_prev)
                if step == 0.0:
                    continue
                weight = step * q[row_offset(i) + (x + i) // 2]
                total += weight * (1.0 + extend(i, x, order + 1))
        return total

    return 1.0 + extend(0, 0, 0)


def first_order_stat(env: Environment, beta: float, k: float, zeta: ZetaField | None = None) -> float:
    """``n^{-3/4} sum_{i,x} sqrt(n) p(i, x) zeta(i, x)``."""
    if zeta is None:
        zeta = zeta_field(env, beta, k)
    n = env.n
    total = 0.0
    for i, p in enumerate(srw_rows(n)):
        if i == 0:
            continue
        total += float(np.dot(p, zeta.values[row_offset(i): row_offset(i) + i + 1]))
    return total * n ** -0.25


def first_order_variance(n: int, zeta_var: float) -> float:
    """Exact variance of ``first_order_stat`` for i.i.d. ``zeta`` of variance ``zeta_var``.

    Uses ``sum_x p(i, x)^2 = C(2i, i) / 4^i``.
    """
    i = np.arange(1, n + 1)
    collisions = np.exp(special.gammaln(2 * i + 1) - 2 * special.gammaln(i + 1) - 2 * i * math.log(2))
    return zeta_var * float(collisions.sum()) / math.sqrt(n)


def local_limit_error(n: int) -> float:
    """``max_x |sqrt(n) p(n, x) - 2 rho(1, x / sqrt(n))|`` over the parity lattice."""
    x = np.arange(-n, n + 1, 2)
    return float(np.max(np.abs(math.sqrt(n) * srw_row(n) - 2 * heat_kernel(1.0, x / math.sqrt(n)))))


def synthetic_zeta(n: int, beta: float, values) -> ZetaField:
    """A ``ZetaField`` with prescribed values, for algebraic checks."""
    values = np.asarray(values, dtype=float)
    if values.size != cone_size(n):
        raise DomainError("values do not cover the cone")
    return ZetaField(values, beta, math.inf, 0.0)
