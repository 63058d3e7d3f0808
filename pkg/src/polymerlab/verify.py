"""Exact-oracle checks behind ``polymerlab verify``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import chaos, polymer
from .disorder import TailSpec


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def enumeration_check(cases: int = 50, seed: int = 1, tol: float = 1e-10) -> Check:
    """Transfer matrix against enumeration of all paths, ``n`` in 8..14."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        n = int(rng.integers(8, 15))
        spec = TailSpec.lomax(float(rng.choice([1.5, 4.0, 8.0])))
        beta = float(rng.uniform(0.0, 2.0))
        env = polymer.generate_env(spec, n, int(rng.integers(2 ** 63)))
        err = abs(polymer.log_partition(env, beta).log_Z - polymer.brute_force_log_partition(env, beta))
        worst = max(worst, err)
    return Check("enumeration", worst < tol, f"max |error| {worst:.2e} over {cases} cases (tol {tol:g})")


def chaos_check(cases: int = 30, seed: int = 2, tol: float = 1e-9) -> Check:
    """Full-order multilinear sum against ``exp(log Z_trunc - n lambda)``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        n = int(rng.choice([6, 8, 10]))
        spec = TailSpec.lomax(float(rng.choice([1.5, 4.0, 8.0])))
        beta = float(rng.uniform(0.1, 1.5))
        k = float(rng.uniform(0.5, 4.0))
        env = polymer.generate_env(spec, n, int(rng.integers(2 ** 63)))
        zeta = chaos.zeta_field(env, beta, k)
        lhs = chaos.expansion_sum(zeta, n)
        rhs = math.exp(polymer.log_partition(polymer.truncated_env(env, k), beta).log_Z - n * zeta.lam)
        worst = max(worst, abs(lhs - rhs) / abs(rhs))
    return Check("chaos identity", worst < tol, f"max relative error {worst:.2e} over {cases} cases (tol {tol:g})")


def feller_check(n_max: int = 16) -> Check:
    """Reflection formula against enumeration, and the ``4 exp(-r^2 / 2n)`` bound."""
    mismatches, bound_failures = 0, 0
    for n in range(1, n_max + 1):
        for r in range(1, n + 1):
            exact = polymer.feller_max_probability_exact(n, r)
            if exact != polymer.enumerate_max_probability(n, r):
                mismatches += 1
            if not exact <= Fraction(4 * math.exp(-r * r / (2 * n))):
                bound_failures += 1
    ok = mismatches == 0 and bound_failures == 0
    return Check("feller", ok, f"{mismatches} mismatches, {bound_failures} bound failures for n <= {n_max}")


def run_all() -> list:
    return [enumeration_check(), chaos_check(), feller_check()]
