"""Experiment configuration, schedules, region classification and replica runs.

A configuration is a flat JSON object::

    {"family": "lomax", "alpha": 4, "c_minus": 1.0, "scale": 1.0,
     "schedule": "HeavyScale", "beta": 1.0, "gamma": null,
     "theorem": "TGAUSS", "cutoff_eta": null,
     "n_list": [512, 1024], "replicas": 200, "base_seed": 7,
     "outputs": "runs/gauss", "eps": 0.001, "K": 8.0, "workers": 1,
     "diagnostic_eps": 0.1, "limit_draws": 0}

For a sweep, ``alpha``, ``c_minus``, ``beta`` and ``gamma`` may also be lists;
the grid is their cross product.  ``POLYMERLAB_WORKERS`` overrides ``workers``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import math
import os
import struct
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import chaos, disorder, limits, stats
from .disorder import CutoffSpec, Family, TailSpec
from .errors import DomainError, UnsupportedRegimeError
from .limits import CenteringSpec, Theorem
from .polymer import make_rng, stream_log_partitions

SWEEP_COLUMNS = (
    "alpha", "gamma_effective", "beta", "n", "replica", "seed", "log_Z_raw",
    "log_Z_truncated", "centering", "centered_scaled_statistic",
    "mean_abs_endpoint", "truncation_gap", "runtime_ms",
)
ROWS_FILE = "rows.csv"
SUMMARY_FILE = "summary.json"


class ScheduleKind(str, Enum):
    FIXED_GAMMA = "FixedGamma"
    QUARTER_ROOT = "QuarterRoot"
    HEAVY_SCALE = "HeavyScale"


@dataclass(frozen=True)
class BetaSchedule:
    """``beta n^{-gamma}``, ``beta n^{-1/4}`` or ``beta / m(n^{3/2})``."""

    kind: ScheduleKind
    beta: float
    gamma: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        if not self.beta > 0:
            raise DomainError("the limit constant beta must be positive")
        if self.kind is ScheduleKind.FIXED_GAMMA:
            if self.gamma is None or not self.gamma >= 0:
                raise DomainError("FixedGamma needs gamma >= 0")
        elif self.gamma is not None:
            raise DomainError(f"{self.kind.value} takes no gamma")

    @classmethod
    def fixed_gamma(cls, gamma, beta=1.0):
        return cls(ScheduleKind.FIXED_GAMMA, beta, gamma)

    @classmethod
    def quarter_root(cls, beta=1.0):
        return cls(ScheduleKind.QUARTER_ROOT, beta)

    @classmethod
    def heavy_scale(cls, beta=1.0):
        return cls(ScheduleKind.HEAVY_SCALE, beta)


def beta_n(schedule: BetaSchedule, spec: TailSpec | None, n: int) -> float:
    if n < 1:
        raise DomainError("n must be at least 1")
    if schedule.kind is ScheduleKind.FIXED_GAMMA:
        return schedule.beta * n ** -schedule.gamma
    if schedule.kind is ScheduleKind.QUARTER_ROOT:
        return schedule.beta * n ** -0.25
    if spec is None or not math.isfinite(spec.alpha):
        raise UnsupportedRegimeError("HeavyScale needs a disorder law with finite alpha")
    return schedule.beta / disorder.m_of_t(spec, n ** 1.5)


def gamma_effective(schedule: BetaSchedule, b_n: float, n: int) -> float:
    """``-log(beta_n / beta) / log n``; the schedule's own gamma at ``n = 1``."""
    if n == 1:
        return {ScheduleKind.FIXED_GAMMA: schedule.gamma,
                ScheduleKind.QUARTER_ROOT: 0.25}.get(schedule.kind, math.nan)
    return -math.log(b_n / schedule.beta) / math.log(n)


# phase diagram --------------------------------------------------------------

def _regions(g: Fraction, a: Fraction):
    quarter = Fraction(1, 4)
    if g > quarter and g >= Fraction(3, 2) / a:
        yield "R1"
    if g == quarter and a >= 6:
        yield "R2"
    if 0 < g < quarter and a >= (5 - 2 * g) / (1 - g):
        yield "R3"
    if g == 0 and a > 5:
        yield "R4"
    # (a - 5) / (a - 2) is undefined at a = 2, so no point there is in R5
    if a > Fraction(1, 2) and a != 2 and max(0, 2 / a - 1, (a - 5) / (a - 2)) < g < Fraction(3, 2) / a:
        yield "R5"
    if 0 < a < 2 and g == 2 / a - 1:
        yield "R6"
    if 0 < a < 2 and 0 <= g < 2 / a - 1:
        yield "R7"


def classify_region(gamma: float, alpha: float) -> str:
    """Region tag for ``(gamma, alpha)`` with the printed inequalities evaluated exactly.

    Floats are compared as the rationals they represent.  Points in no
    region get ``"unclassified"``; the regions overlap only for
    ``alpha < 1/2``, where the tags are joined with ``+``.
    """
    if not gamma >= 0 or not alpha > 0 or not math.isfinite(gamma) or not math.isfinite(alpha):
        raise DomainError("need finite gamma >= 0 and alpha > 0")
    tags = list(_regions(Fraction(gamma), Fraction(alpha)))
    return "+".join(tags) if tags else "unclassified"


def level_threshold(gamma: float) -> float:
    return (5 - 2 * gamma) / (1 - gamma)


def level_xi(gamma: float, alpha: float) -> float:
    """Transversal exponent on the level curves; the branch switches at ``alpha = (5 - 2 gamma)/(1 - gamma)``."""
    if not 0 <= gamma < 1:
        raise DomainError("level curves need 0 <= gamma < 1")
    if not alpha > 0.5:
        raise DomainError("level curves need alpha > 1/2")
    if alpha <= level_threshold(gamma):
        return (1 + alpha * (1 - gamma)) / (2 * alpha - 1)
    return 2 * (1 - gamma) / 3


_LEVEL_REGIONS = {"R2", "R3", "R4", "R5", "R6"}


def region_xi(gamma: float, alpha: float) -> float | None:
    """Transversal exponent by region: the level-curve value on ``R2..R6``,
    ``1/2`` on ``R1``, ``1`` on ``R7``, ``None`` elsewhere."""
    tag = classify_region(gamma, alpha)
    if tag in _LEVEL_REGIONS:
        return level_xi(gamma, alpha)
    return {"R1": 0.5, "R7": 1.0}.get(tag)


# configuration --------------------------------------------------------------

_DEFAULTS = {
    "family": "lomax", "c_minus": 1.0, "scale": 1.0, "gamma": None, "theorem": None,
    "cutoff_eta": None, "base_seed": 0, "outputs": "polymerlab-out", "eps": 1e-3, "K": 8.0,
    "workers": 1, "diagnostic_eps": 0.1, "limit_draws": 0,
}
_REQUIRED = ("alpha", "schedule", "beta", "n_list", "replicas")
_GRID_KEYS = ("alpha", "c_minus", "beta", "gamma")


@dataclass(frozen=True)
class ExperimentConfig:
    tail: TailSpec
    schedule: BetaSchedule
    theorem: Theorem | None
    n_list: tuple
    replicas: int
    base_seed: int = 0
    cutoff: CutoffSpec | None = None
    outputs: str = "polymerlab-out"
    eps: float = 1e-3
    K: float = 8.0
    workers: int = 1
    diagnostic_eps: float = 0.1
    limit_draws: int = 0

    def __post_init__(self):
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        if self.theorem is not None:
            object.__setattr__(self, "theorem", Theorem(self.theorem))
            CenteringSpec(self.theorem, self.tail.alpha)
        if self.replicas < 1:
            raise DomainError("replicas must be at least 1")
        if not self.n_list or any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise DomainError("n_list must be nonempty and strictly increasing")
        if self.n_list[0] < 1:
            raise DomainError("path lengths must be positive")
        if self.workers < 1:
            raise DomainError("workers must be at least 1")
        if self.cutoff is None and self.tail.alpha > 0.5:
            object.__setattr__(self, "cutoff", CutoffSpec.for_alpha(self.tail.alpha))

    def to_dict(self) -> dict:
        return {
            "family": self.tail.family.value, "alpha": self.tail.alpha,
            "c_minus": self.tail.c_minus, "scale": self.tail.scale,
            "schedule": self.schedule.kind.value, "beta": self.schedule.beta,
            "gamma": self.schedule.gamma,
            "theorem": None if self.theorem is None else self.theorem.value,
            "cutoff_eta": None if self.cutoff is None else self.cutoff.eta,
            "n_list": list(self.n_list), "replicas": self.replicas, "base_seed": self.base_seed,
            "outputs": self.outputs, "eps": self.eps, "K": self.K, "workers": self.workers,
            "diagnostic_eps": self.diagnostic_eps, "limit_draws": self.limit_draws,
        }

    @classmethod
    def from_dict(cls, flat: dict) -> "ExperimentConfig":
        d = _complete(flat)
        for key in _GRID_KEYS:
            if isinstance(d[key], list):
                raise DomainError(f"{key!r} is a list; use a sweep for grids")
        family = disorder.parse_family(d["family"])
        if family is Family.GAUSSIAN:
            tail = TailSpec.gaussian()
        elif family is Family.PARETO:
            tail = TailSpec.pareto(float(d["alpha"]))
        else:
            tail = TailSpec.lomax(float(d["alpha"]), float(d["c_minus"]), float(d["scale"]))
        cutoff = None
        if d["cutoff_eta"] is not None:
            cutoff = CutoffSpec.for_alpha(tail.alpha, float(d["cutoff_eta"]))
        return cls(
            tail=tail,
            schedule=BetaSchedule(d["schedule"], float(d["beta"]),
                                  None if d["gamma"] is None else float(d["gamma"])),
            theorem=d["theorem"], n_list=tuple(d["n_list"]), replicas=int(d["replicas"]),
            base_seed=int(d["base_seed"]), cutoff=cutoff, outputs=str(d["outputs"]),
            eps=float(d["eps"]), K=float(d["K"]), workers=int(d["workers"]),
            diagnostic_eps=float(d["diagnostic_eps"]), limit_draws=int(d["limit_draws"]),
        )


def _complete(flat: dict) -> dict:
    unknown = set(flat) - set(_DEFAULTS) - set(_REQUIRED)
    if unknown:
        raise DomainError(f"unknown config keys: {sorted(unknown)}")
    d = dict(_DEFAULTS)
    d.update(flat)
    if disorder.parse_family(d["family"]) is Family.GAUSSIAN:
        d.setdefault("alpha", math.inf)
    missing = [k for k in _REQUIRED if k not in d]
    if missing:
        raise DomainError(f"missing config keys: {missing}")
    return d


def _apply_env(d: dict) -> dict:
    workers = os.environ.get("POLYMERLAB_WORKERS")
    if workers:
        d = dict(d, workers=int(workers))
    return d


def load_config_dict(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc
    return _apply_env(json.loads(text))


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(load_config_dict(path))


def expand_grid(flat: dict) -> list:
    """Cross product over the list-valued keys ``alpha, c_minus, beta, gamma``."""
    d = _complete(flat)
    axes = [(k, d[k] if isinstance(d[k], list) else [d[k]]) for k in _GRID_KEYS]
    points = []
    for combo in itertools.product(*(vals for _, vals in axes)):
        point = dict(flat)
        point.update({k: v for (k, _), v in zip(axes, combo) if k in flat})
        points.append(ExperimentConfig.from_dict(point))
    return points


# seeds and replicas ---------------------------------------------------------

def seed_for(base_seed: int, n: int, replica: int) -> int:
    """``hash64(base_seed, n, replica)``: the first 8 bytes of BLAKE2b over three little-endian int64s."""
    digest = hashlib.blake2b(struct.pack("<qqq", base_seed, n, replica), digest_size=8,
                             person=b"polymerlab-seed").digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class SweepRow:
    alpha: float
    gamma_effective: float
    beta: float
    n: int
    replica: int
    seed: int
    log_Z_raw: float
    log_Z_truncated: float
    centering: float
    centered_scaled_statistic: float
    mean_abs_endpoint: float
    truncation_gap: float
    runtime_ms: float = field(compare=False)

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, c) for c in SWEEP_COLUMNS)


@dataclass(frozen=True)
class _PointPlan:
    """Everything a replica task needs for one ``(parameter point, n)``."""

    tail: TailSpec
    theorem: Theorem | None
    beta: float
    gamma_eff: float
    n: int
    beta_n: float
    k: float | None
    centering: float


def _plan(config: ExperimentConfig, n: int) -> _PointPlan:
    spec = config.tail
    b_n = beta_n(config.schedule, spec, n)
    k = disorder.cutoff_k(spec, b_n, n, config.cutoff) if n >= 2 else None
    centering = 0.0
    if config.theorem is not None:
        centering = limits.centering_constant(spec, b_n, n, CenteringSpec(config.theorem, spec.alpha))
    return _PointPlan(spec, config.theorem, config.schedule.beta,
                      gamma_effective(config.schedule, b_n, n), n, b_n, k, centering)


def _run_task(task) -> SweepRow:
    plan, replica, seed = task
    start = time.perf_counter()
    raw, trunc = stream_log_partitions(plan.tail, plan.n, seed, plan.beta_n, plan.k)
    log_trunc = raw.log_Z if trunc is None else trunc.log_Z
    if plan.theorem is None:
        stat = raw.log_Z
    else:
        stat = limits.scaled_statistic(plan.theorem, raw.log_Z, plan.centering, plan.beta_n, plan.n, plan.tail)
    law = raw.endpoint_law()
    mae = float(np.dot(np.abs(raw.xs), law))
    elapsed = (time.perf_counter() - start) * 1e3
    return SweepRow(plan.tail.alpha, plan.gamma_eff, plan.beta, plan.n, replica, seed,
                    float(raw.log_Z), float(log_trunc), plan.centering, float(stat), mae,
                    float(raw.log_Z - log_trunc), elapsed)


def _tasks(config: ExperimentConfig):
    for n in config.n_list:
        plan = _plan(config, n)
        for r in range(config.replicas):
            yield plan, r, seed_for(config.base_seed, n, r)


def _map(fn, tasks, workers: int):
    tasks = list(tasks)
    if workers == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (8 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


def run_replicas(config: ExperimentConfig) -> list:
    """One row per ``(n, replica)``, ordered by ``(n, replica)`` whatever the worker count."""
    return _map(_run_task, _tasks(config), config.workers)


# persistence ---------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        raise TypeError("boolean cell")
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def rows_to_csv(rows, include_runtime: bool = True) -> str:
    cols = SWEEP_COLUMNS if include_runtime else SWEEP_COLUMNS[:-1]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for row in rows:
        writer.writerow([_fmt(getattr(row, c)) for c in cols])
    return buf.getvalue()


def read_rows_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SWEEP_COLUMNS:
            raise DomainError(f"{path}: unexpected columns {reader.fieldnames}")
        out = []
        for rec in reader:
            vals = {c: (int(rec[c]) if c in ("n", "replica", "seed") else float(rec[c])) for c in SWEEP_COLUMNS}
            out.append(SweepRow(**vals))
    return out


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _limit_distance(config: ExperimentConfig, plan: _PointPlan, values: np.ndarray):
    """KS distance of the scaled statistic to the theorem's limit law, when it is available."""
    if config.theorem is Theorem.TGAUSS:
        return "gaussian", stats.ks_one_sample(values, limits.gaussian_limit_cdf)
    if config.limit_draws <= 0:
        return None, None
    rng = make_rng(seed_for(config.base_seed, -1, plan.n))
    if config.theorem is Theorem.THEAVY:
        tail = config.tail
        draws = 2.0 * limits.sample_W_batch(tail.alpha, tail.c_minus, config.schedule.beta, config.eps,
                                            config.K, config.limit_draws, rng)
        return "poisson_field", stats.ks_two_sample(values, draws)
    if config.theorem is Theorem.T14:
        n_ref = max(config.n_list[-1], 1024)
        draws = np.array([limits.she_reference_sample(config.schedule.beta, n_ref, rng)
                          for _ in range(config.limit_draws)])
        return "gaussian_reference", stats.ks_two_sample(values, draws)
    return None, None


def _posi_frequency(config: ExperimentConfig, plan: _PointPlan, rows) -> float | None:
    """Share of replicas with ``Z_trunc < diagnostic_eps * exp(n lambda)``."""
    if plan.k is None or not plan.beta_n > 0:
        return None
    lam = chaos.cumulant(config.tail, plan.beta_n, plan.k)
    level = math.log(config.diagnostic_eps) + plan.n * lam
    return float(np.mean([r.log_Z_truncated < level for r in rows]))


def summarize(config: ExperimentConfig, rows) -> dict:
    by_n = {n: [r for r in rows if r.n == n] for n in config.n_list}
    per_n = []
    iqr_pairs, endpoint_pairs = [], []
    for n, group in by_n.items():
        if not group:
            continue
        plan = _plan(config, n)
        stat = np.array([r.centered_scaled_statistic for r in group])
        entry = {"n": n, "replicas": len(group), "beta_n": plan.beta_n, "k": plan.k,
                 "centering": plan.centering, "mean": float(np.mean(stat))}
        if len(group) >= 2:
            sc = stats.scale_estimates(stat)
            entry.update(variance=sc.variance, iqr=sc.iqr, mad=sc.mad)
            log_z_iqr = stats.scale_estimates([r.log_Z_raw for r in group]).iqr
            entry["log_Z_iqr"] = log_z_iqr
            if log_z_iqr > 0:
                iqr_pairs.append((n, log_z_iqr))
        reference, ks = _limit_distance(config, plan, stat)
        entry["limit_law"] = reference
        entry["ks_to_limit"] = ks
        entry["posi_frequency"] = _posi_frequency(config, plan, group)
        entry["mean_abs_endpoint"] = float(np.mean([r.mean_abs_endpoint for r in group]))
        endpoint_pairs.append((n, entry["mean_abs_endpoint"]))
        per_n.append(entry)

    def fit(pairs):
        if len(pairs) < 3:
            return None
        f = stats.loglog_slope(pairs)
        return {"slope": f.slope, "intercept": f.intercept, "stderr": f.stderr, "r_squared": f.r_squared}

    gamma_eff = None
    if config.schedule.kind is ScheduleKind.FIXED_GAMMA:
        gamma_eff = config.schedule.gamma
    elif per_n:
        gamma_eff = gamma_effective(config.schedule, per_n[-1]["beta_n"], per_n[-1]["n"])
    return _clean({
        "config": {k: v for k, v in config.to_dict().items() if k not in ("workers", "outputs")},
        "region": _region_or_none(gamma_eff, config.tail.alpha),
        "per_n": per_n,
        "chi_fit_iqr": fit(iqr_pairs),
        "xi_fit_endpoint": fit(endpoint_pairs),
    })


def _region_or_none(gamma, alpha):
    if gamma is None or not math.isfinite(alpha) or not math.isfinite(gamma) or gamma < 0:
        return None
    return classify_region(gamma, alpha)


def _write(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="")
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


def simulate(config: ExperimentConfig, outputs=None) -> tuple:
    """Run one parameter point; write ``rows.csv`` and ``summary.json``."""
    out = Path(outputs or config.outputs)
    rows = run_replicas(config)
    summary = summarize(config, rows)
    _write(out / ROWS_FILE, rows_to_csv(rows))
    _write(out / SUMMARY_FILE, json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return rows, summary


def sweep(flat: dict, outputs=None) -> tuple:
    """Cross product of the list-valued keys; rows of every point go into one CSV."""
    points = expand_grid(flat)
    out = Path(outputs or _complete(flat)["outputs"])
    rows, summaries = [], []
    for point in points:
        point_rows = run_replicas(point)
        rows.extend(point_rows)
        summaries.append(summarize(point, point_rows))
    _write(out / ROWS_FILE, rows_to_csv(rows))
    _write(out / SUMMARY_FILE, json.dumps({"points": summaries}, indent=2, sort_keys=True) + "\n")
    return rows, summaries


def with_workers(config: ExperimentConfig, workers: int) -> ExperimentConfig:
    return replace(config, workers=workers)


def schema() -> dict:
    return json.loads((Path(__file__).with_name("sweep_row_schema.json")).read_text(encoding="utf-8"))


__all__ = [
    "SWEEP_COLUMNS", "ScheduleKind", "BetaSchedule", "beta_n", "gamma_effective", "classify_region",
    "level_threshold", "level_xi", "region_xi", "ExperimentConfig", "load_config", "load_config_dict", "expand_grid",
    "seed_for", "SweepRow", "run_replicas", "rows_to_csv", "read_rows_csv", "summarize", "simulate",
    "sweep", "with_workers", "schema",
]
