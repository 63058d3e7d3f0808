"""Disorder environments and exact point-to-line partition functions.

Sites live on the parity cone ``{(i, x): 1 <= i <= n, |x| <= i, i + x even}``
and are stored row-major, ``x`` ascending, as one flat float64 array.  Row
``i`` occupies ``i + 1`` consecutive slots starting at ``row_offset(i)``.

Environments are drawn from ``PCG64(seed)`` with one raw 64-bit word per
site, in cone order.  Streaming evaluation regenerates the same words block
by block, so a streamed run and a stored environment see identical weights.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import special
from scipy.special import logsumexp

from . import disorder
from ._kernels import advance_linear, advance_log
from .disorder import Family, TailSpec
from .errors import CostGuardError, DomainError

BLOCK_SITES = 1 << 14
# largest |beta * omega| handled by the rescaled linear recursion
LINEAR_LIMIT = 50.0
BRUTE_FORCE_MAX_N = 20


class _LogZero(float):
    """``log 0``: orders below every real but refuses subtraction."""

    def __new__(cls):
        return super().__new__(cls, -math.inf)

    def __sub__(self, other):
        raise ArithmeticError("subtraction involving log(0)")

    __rsub__ = __sub__

    def __reduce__(self):
        return (_LogZero, ())

    def __repr__(self):
        return "LOG_ZERO"


LOG_ZERO = _LogZero()


def row_offset(i: int) -> int:
    """Number of cone sites in rows ``1 .. i-1``."""
    return (i - 1) * (i + 2) // 2


def cone_size(n: int) -> int:
    return n * (n + 3) // 2


def site_index(i: int, x: int) -> int:
    if not (1 <= i and abs(x) <= i and (i + x) % 2 == 0):
        raise DomainError(f"({i}, {x}) is not a cone site")
    return row_offset(i) + (x + i) // 2


def row_blocks(n: int, max_sites: int = BLOCK_SITES):
    """Consecutive row ranges ``[i0, i1)`` holding at most ``max_sites`` sites each."""
    i0 = 1
    while i0 <= n:
        i1, size = i0, 0
        while i1 <= n and (size == 0 or size + i1 + 1 <= max_sites):
            size += i1 + 1
            i1 += 1
        yield i0, i1
        i0 = i1


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class Environment:
    """Realized weights on the cone of depth ``n``."""

    n: int
    seed: int
    spec: TailSpec
    omega: np.ndarray
    truncated_at: float | None = None

    def __post_init__(self):
        if self.omega.shape != (cone_size(self.n),):
            raise DomainError("weight array does not match the cone size")

    def row(self, i: int) -> np.ndarray:
        return self.omega[row_offset(i): row_offset(i) + i + 1]

    def value(self, i: int, x: int) -> float:
        return float(self.omega[site_index(i, x)])

    def site_coordinates(self):
        """Arrays ``(i, x)`` aligned with ``omega``."""
        i = np.repeat(np.arange(1, self.n + 1), np.arange(2, self.n + 2))
        j = np.arange(cone_size(self.n)) - (i - 1) * (i + 2) // 2
        return i, 2 * j - i

    def blocks(self):
        for i0, i1 in row_blocks(self.n):
            yield i0, i1, self.omega[row_offset(i0): row_offset(i1)]


def generate_env(spec: TailSpec, n: int, seed: int) -> Environment:
    if n < 1:
        raise DomainError("n must be at least 1")
    rng = make_rng(seed)
    omega = disorder.sample(spec, rng, cone_size(n))
    return Environment(n, seed, spec, omega)


def stream_blocks(spec: TailSpec, n: int, seed: int):
    """Yield ``(i0, i1, weights)`` row blocks without holding the whole cone."""
    rng = make_rng(seed)
    for i0, i1 in row_blocks(n):
        yield i0, i1, disorder.sample(spec, rng, row_offset(i1) - row_offset(i0))


def env_from_rows(spec: TailSpec, rows, seed: int = 0) -> Environment:
    """Environment from explicit rows, ``rows[i-1]`` listing ``x = -i, -i+2, ..., i``."""
    n = len(rows)
    flat = np.concatenate([np.asarray(r, dtype=float) for r in rows]) if n else np.empty(0)
    return Environment(n, seed, spec, flat)


@dataclass(frozen=True)
class PartitionResult:
    """``log Z`` and the log of each endpoint's share, indexed by ``x = -n, -n+2, ..., n``."""

    log_Z: float
    endpoint_log_weights: np.ndarray
    beta: float
    restricted_h: int | None = None

    @property
    def n(self) -> int:
        return len(self.endpoint_log_weights) - 1

    @property
    def xs(self) -> np.ndarray:
        return np.arange(-self.n, self.n + 1, 2)

    def endpoint_law(self) -> np.ndarray:
        if self.log_Z == -math.inf:
            raise ArithmeticError("empty path set has no endpoint law")
        w = np.exp(self.endpoint_log_weights - self.log_Z)
        return w / w.sum()


class _NeedsLogForm(Exception):
    pass


class _TransferMatrix:
    """Forward recursion ``Z_i(x) = e^{beta omega(i,x)} (Z_{i-1}(x-1) + Z_{i-1}(x+1)) / 2``.

    The linear form rescales every row to unit maximum and carries the log
    scale separately.  It is used only while all ``|beta * omega|`` stay at
    or below ``LINEAR_LIMIT``, so no retained state can underflow and later
    matter.  Otherwise the whole recursion runs on log values.
    """

    def __init__(self, n: int, beta: float, h: int | None, log_form: bool = False):
        self.n, self.beta, self.h = n, beta, h
        self.log_form = log_form
        self.rows = np.full((2, n + 1), -np.inf if log_form else 0.0)
        self.rows[0, 0] = 0.0 if log_form else 1.0
        self.cur = 0
        self.log_scale = 0.0
        self.top = 1.0
        self.dead = False

    def feed(self, i0, i1, a):
        if self.dead:
            return
        if self.log_form:
            self.cur, alive = advance_log(self.rows, self.cur, a, i0, i1, self.h or 0)
            self.dead = not alive
            return
        if a.size and np.max(np.abs(a)) > LINEAR_LIMIT:
            raise _NeedsLogForm
        self.cur, self.log_scale, self.top = advance_linear(
            self.rows, self.cur, np.exp(a), i0, i1, self.h or 0, self.log_scale, self.top)
        self.dead = self.top == 0.0

    def result(self) -> PartitionResult:
        if self.dead:
            return PartitionResult(LOG_ZERO, np.full(self.n + 1, -np.inf), self.beta, self.h)
        last = self.rows[self.cur]
        if self.log_form:
            return PartitionResult(float(logsumexp(last)), last.copy(), self.beta, self.h)
        with np.errstate(divide="ignore"):
            logs = np.log(last) + self.log_scale
        log_Z = self.log_scale + math.log(last.sum())
        return PartitionResult(log_Z, logs, self.beta, self.h)


def _free_walk(n: int, beta: float) -> PartitionResult:
    j = np.arange(n + 1)
    logs = (math.lgamma(n + 1) - special.gammaln(j + 1) - special.gammaln(n - j + 1)
            - n * math.log(2.0))
    return PartitionResult(0.0, logs, beta, None)


def _run(n, make_blocks, weight_map, beta, h=None) -> PartitionResult:
    """Drive one recursion over ``make_blocks()``, retrying in log form when needed."""
    if beta < 0:
        raise DomainError("beta must be nonnegative")
    if beta == 0 and h is None:
        return _free_walk(n, 0.0)
    for log_form in (False, True):
        tm = _TransferMatrix(n, beta, h, log_form)
        try:
            for i0, i1, w in make_blocks():
                tm.feed(i0, i1, beta * weight_map(w))
        except _NeedsLogForm:
            continue
        return tm.result()
    raise AssertionError("unreachable")


def _identity(w):
    return w


def log_partition(env: Environment, beta: float) -> PartitionResult:
    """``log Z`` with ``Z = 2^{-n} sum_paths exp(beta * H)``, by the forward transfer matrix.

    Rows are rescaled to unit maximum as they are produced and the log scale
    is carried separately, so no weight size can overflow.  At ``beta = 0``
    the exact binomial endpoint law is returned and ``log_Z`` is exactly 0.
    """
    return _run(env.n, env.blocks, _identity, beta)


def log_partition_restricted(env: Environment, beta: float, h: int) -> PartitionResult:
    """Same as ``log_partition`` over paths with ``max_i |s_i| < h``."""
    if h <= 0:
        raise DomainError("block half-width h must be positive")
    if h > env.n:
        return log_partition(env, beta)
    return _run(env.n, env.blocks, _identity, beta, h)


def stream_log_partitions(spec: TailSpec, n: int, seed: int, beta: float, k: float | None = None):
    """Raw and (when ``k`` is given) truncated partition functions from regenerated rows.

    Returns ``(raw, truncated_or_None)``; the weights are those of
    ``generate_env(spec, n, seed)``.  Both recursions share one pass over the
    stream unless one of them needs the log form.
    """
    if beta < 0:
        raise DomainError("beta must be nonnegative")
    if beta == 0:
        free = _free_walk(n, 0.0)
        return free, (free if k is not None else None)
    maps = [_identity] if k is None else [_identity, lambda w: disorder.truncate(w, k)]
    mats = [_TransferMatrix(n, beta, None) for _ in maps]
    failed = [False] * len(maps)
    for i0, i1, w in stream_blocks(spec, n, seed):
        for idx, (tm, f) in enumerate(zip(mats, maps)):
            if failed[idx]:
                continue
            try:
                tm.feed(i0, i1, beta * f(w))
            except _NeedsLogForm:
                failed[idx] = True
    out = []
    for tm, f, bad in zip(mats, maps, failed):
        if bad:
            tm = _TransferMatrix(n, beta, None, log_form=True)
            for i0, i1, w in stream_blocks(spec, n, seed):
                tm.feed(i0, i1, beta * f(w))
        out.append(tm.result())
    return out[0], (out[1] if k is not None else None)


def endpoint_law(env: Environment, beta: float) -> np.ndarray:
    """Polymer endpoint distribution over ``x = -n, -n+2, ..., n``."""
    return log_partition(env, beta).endpoint_law()


def mean_abs_endpoint(env: Environment, beta: float) -> float:
    res = log_partition(env, beta)
    return float(np.dot(np.abs(res.xs), res.endpoint_law()))


def excess_weight(env: Environment, k: float, h: int) -> float:
    """Sum of the weights above ``k`` over sites with ``|x| < h``."""
    if not k > 0 or h < 1:
        raise DomainError("need k > 0 and h >= 1")
    _, x = env.site_coordinates()
    w = env.omega
    return float(np.sum(w[(np.abs(x) < h) & (w > k)]))


def truncated_env(env: Environment, k: float) -> Environment:
    return replace(env, omega=disorder.truncate(env.omega, k), truncated_at=float(k))


def _path_positions(n: int, start: int, stop: int) -> np.ndarray:
    codes = np.arange(start, stop, dtype=np.int64)[:, None]
    steps = ((codes >> np.arange(n)) & 1) * 2 - 1
    return np.cumsum(steps, axis=1)


def brute_force_log_partition(env: Environment, beta: float, h: int | None = None) -> float:
    """Enumerate all ``2^n`` paths. Oracle for the transfer matrix, ``n <= 20``."""
    n = env.n
    if n > BRUTE_FORCE_MAX_N:
        raise CostGuardError(f"enumeration refused for n={n} > {BRUTE_FORCE_MAX_N}")
    rows = np.arange(1, n + 1)
    offsets = (rows - 1) * (rows + 2) // 2
    energies = []
    chunk = 1 << 15
    for start in range(0, 1 << n, chunk):
        pos = _path_positions(n, start, min(start + chunk, 1 << n))
        if h is not None:
            pos = pos[np.max(np.abs(pos), axis=1) < h]
        idx = offsets + (pos + rows) // 2
        energies.append(env.omega[idx].sum(axis=1))
    energy = np.concatenate(energies)
    if energy.size == 0:
        return LOG_ZERO
    return float(logsumexp(beta * energy) - n * math.log(2.0))


def feller_max_probability_exact(n: int, r: int) -> Fraction:
    """``P(max_{i<=n} s_i >= r) = 2 P(s_n >= r) - P(s_n = r)`` as an exact fraction."""
    if n < 1 or r < 1:
        raise DomainError("need n >= 1 and r >= 1")

    def point(x):
        if abs(x) > n or (n + x) % 2:
            return 0
        return math.comb(n, (n + x) // 2)

    at_least = sum(point(x) for x in range(r, n + 1))
    return Fraction(2 * at_least - point(r), 2 ** n)


def feller_max_probability(n: int, r: int) -> float:
    return float(feller_max_probability_exact(n, r))


def enumerate_max_probability(n: int, r: int) -> Fraction:
    """Fraction of the ``2^n`` paths whose running maximum reaches ``r``."""
    if n > BRUTE_FORCE_MAX_N:
        raise CostGuardError(f"enumeration refused for n={n}")
    hits = 0
    chunk = 1 << 15
    for start in range(0, 1 << n, chunk):
        pos = _path_positions(n, start, min(start + chunk, 1 << n))
        hits += int(np.count_nonzero(pos.max(axis=1) >= r))
    return Fraction(hits, 2 ** n)


# binary dump ----------------------------------------------------------------

_MAGIC = b"PLMRENV1"
_HEADER = struct.Struct("<8sQQB3xdddd")
_FAMILY_TAGS = {Family.LOMAX: 1, Family.PARETO: 2, Family.GAUSSIAN: 3}


def dump_env(env: Environment, path) -> None:
    """Little-endian header ``(magic, n, seed, family tag, alpha, c_minus, scale, cut)``
    followed by the weights as row-major float64."""
    spec = env.spec
    cut = math.nan if env.truncated_at is None else env.truncated_at
    header = _HEADER.pack(_MAGIC, env.n, env.seed, _FAMILY_TAGS[spec.family],
                          spec.alpha, spec.c_minus, spec.scale, cut)
    with open(Path(path), "wb") as fh:
        fh.write(header)
        fh.write(env.omega.astype("<f8").tobytes())


def load_env(path) -> Environment:
    data = Path(path).read_bytes()
    magic, n, seed, tag, alpha, c_minus, scale, cut = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise DomainError(f"{path}: not an environment dump")
    family = {v: k for k, v in _FAMILY_TAGS.items()}[tag]
    omega = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    spec = TailSpec(family, alpha, c_minus, scale)
    return Environment(n, seed, spec, omega, None if math.isnan(cut) else cut)
