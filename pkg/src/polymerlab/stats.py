"""Distribution comparison: ECDFs, KS distances, empirical characteristic
functions, robust scales, percentile bootstrap and log-log slopes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import stats as sps

from .errors import DomainError

_ECF_CHUNK = 1 << 14


def _as_array(values, allow_inf: bool = False) -> np.ndarray:
    a = np.asarray(values, dtype=float).ravel()
    if np.isnan(a).any():
        raise DomainError("sample contains NaN")
    if not allow_inf and not np.isfinite(a).all():
        raise DomainError("sample contains infinite values")
    return a


@dataclass(frozen=True)
class EmpiricalSample:
    """Finite sample values with free-form metadata (parameter point, seeds)."""

    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "values", _as_array(self.values))
        if self.values.size == 0:
            raise DomainError("empty sample")

    def __len__(self):
        return self.values.size

    @cached_property
    def sorted(self) -> np.ndarray:
        return np.sort(self.values)

    def ecdf(self, x):
        return ecdf(self, x)


def _sorted_values(sample, allow_inf: bool = False) -> np.ndarray:
    if isinstance(sample, EmpiricalSample):
        return sample.sorted
    a = np.sort(_as_array(sample, allow_inf))
    if a.size == 0:
        raise DomainError("empty sample")
    return a


def ecdf(sample, x):
    """Right-continuous ``F_n(x) = #{X_i <= x} / n``."""
    s = _sorted_values(sample, allow_inf=True)
    out = np.searchsorted(s, np.asarray(x, dtype=float), side="right") / s.size
    return float(out) if np.ndim(x) == 0 else out


def ks_one_sample(sample, cdf) -> float:
    """``sup_x |F_n(x) - F(x)|`` for a right-continuous reference ``cdf``.

    Both sides of every jump of ``F_n`` are checked; the left limit of ``F``
    is read at the next float below each sample value, so atoms of ``F``
    that sit on sample values are handled exactly.
    """
    s = _sorted_values(sample, allow_inf=True)
    n = s.size
    distinct, first = np.unique(s, return_index=True)
    after = np.append(first[1:], n) / n
    before = first / n
    f_at = np.asarray(cdf(distinct), dtype=float)
    f_left = np.asarray(cdf(np.nextafter(distinct, -np.inf)), dtype=float)
    return float(max(np.max(np.abs(after - f_at)), np.max(np.abs(before - f_left))))


def ks_two_sample(a, b) -> float:
    """``sup_x |F_a(x) - F_b(x)|``; infinite values are allowed."""
    sa = _sorted_values(a, allow_inf=True)
    sb = _sorted_values(b, allow_inf=True)
    grid = np.concatenate([sa, sb])
    fa = np.searchsorted(sa, grid, side="right") / sa.size
    fb = np.searchsorted(sb, grid, side="right") / sb.size
    return float(np.max(np.abs(fa - fb)))


def ecf(sample, y_grid) -> np.ndarray:
    """``mean(exp(i y X))`` at every ``y`` of the grid."""
    x = sample.values if isinstance(sample, EmpiricalSample) else _as_array(sample)
    if x.size == 0:
        raise DomainError("empty sample")
    y = np.atleast_1d(np.asarray(y_grid, dtype=float))
    acc = np.zeros(y.size, dtype=complex)
    for start in range(0, x.size, _ECF_CHUNK):
        phase = np.outer(y, x[start: start + _ECF_CHUNK])
        acc += np.cos(phase).sum(axis=1) + 1j * np.sin(phase).sum(axis=1)
    return acc / x.size


@dataclass(frozen=True)
class ScaleEstimates:
    variance: float
    iqr: float
    mad: float


def scale_estimates(sample) -> ScaleEstimates:
    """Unbiased variance, interquartile range and raw median absolute deviation."""
    x = sample.values if isinstance(sample, EmpiricalSample) else _as_array(sample)
    if x.size < 2:
        raise DomainError("need at least two values")
    q1, q3 = np.percentile(x, [25, 75])
    med = np.median(x)
    return ScaleEstimates(float(np.var(x, ddof=1)), float(q3 - q1), float(np.median(np.abs(x - med))))


def bootstrap_ci(sample, statistic, level: float, resamples: int, rng) -> tuple:
    """Percentile bootstrap interval for ``statistic``.

    The ends are widened to the point estimate if needed, so the interval
    always contains it.
    """
    if not 0 < level < 1:
        raise DomainError("level must lie in (0, 1)")
    if resamples < 1:
        raise DomainError("need at least one resample")
    x = sample.values if isinstance(sample, EmpiricalSample) else _as_array(sample)
    point = float(statistic(x))
    reps = np.empty(resamples)
    for r in range(resamples):
        reps[r] = statistic(x[rng.integers(0, x.size, x.size)])
    lo, hi = np.quantile(reps, [(1 - level) / 2, (1 + level) / 2])
    return min(float(lo), point), max(float(hi), point)


@dataclass(frozen=True)
class SlopeFit:
    """Least-squares line through ``(log n, log statistic)``."""

    slope: float
    intercept: float
    stderr: float
    r_squared: float
    points: tuple

    def __post_init__(self):
        if len(self.points) < 3:
            raise DomainError("a slope fit needs at least three points")


def loglog_slope(pairs) -> SlopeFit:
    pairs = [(float(n), float(s)) for n, s in pairs]
    if len(pairs) < 3:
        raise DomainError("a slope fit needs at least three points")
    if any(n <= 0 or not s > 0 or not math.isfinite(s) for n, s in pairs):
        raise DomainError("log-log fit needs positive finite n and statistics")
    pts = tuple((math.log(n), math.log(s)) for n, s in pairs)
    lx, ly = map(np.array, zip(*pts))
    fit = sps.linregress(lx, ly)
    r2 = 1.0 if np.ptp(ly) == 0 and fit.slope == 0 else float(fit.rvalue ** 2)
    return SlopeFit(float(fit.slope), float(fit.intercept), float(max(fit.stderr, 0.0)), r2, pts)
