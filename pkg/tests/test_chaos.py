import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats as sps

from polymerlab import chaos, disorder, polymer
from polymerlab.disorder import TailSpec
from polymerlab.errors import CostGuardError, DomainError


def test_kernel_values():
    kern = chaos.srw_kernel(10)
    assert kern.p(2, 0) == 0.5
    assert kern.p(2, 1) == 0.0
    assert kern.p(10, 0) == pytest.approx(math.comb(10, 5) / 1024, rel=1e-15)
    assert np.allclose(chaos.srw_row(10), [math.comb(10, j) / 1024 for j in range(11)], rtol=1e-13)


def test_kernel_rows_sum_to_one():
    for i, row in enumerate(chaos.srw_rows(1000)):
        if i in (1, 10, 999, 1000):
            assert row.sum() == pytest.approx(1.0, abs=1e-12)
    assert chaos.srw_row(100000).sum() == pytest.approx(1.0, abs=1e-12)


def test_heat_kernel():
    assert chaos.heat_kernel(1.0, 0.0) == pytest.approx(0.3989422804014327, rel=1e-15)
    assert integrate.quad(lambda x: chaos.heat_kernel(0.37, x), -np.inf, np.inf)[0] == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(DomainError):
        chaos.heat_kernel(0.0, 1.0)


def test_local_limit():
    assert chaos.local_limit_error(10 ** 4) < 0.01 * chaos.heat_kernel(1.0, 0.0)


def test_zeta_vanishes_at_cumulant():
    spec = TailSpec.lomax(4.0)
    beta, k = 0.3, 5.0
    lam = chaos.cumulant(spec, beta, k)
    env = polymer.Environment(4, 0, spec, np.full(polymer.cone_size(4), lam / beta))
    assert np.allclose(chaos.zeta_field(env, beta, k).values, 0.0, atol=1e-15)


def test_zeta_centered_by_sampling():
    spec = TailSpec.lomax(4.0)
    beta, k = 0.1, 10.0
    omega = disorder.sample(spec, polymer.make_rng(31), 10 ** 7)
    zeta = np.expm1(beta * disorder.truncate(omega, k) - chaos.cumulant(spec, beta, k)) / beta
    assert abs(zeta.mean()) < 3 * zeta.std() / math.sqrt(zeta.size)
    assert zeta.var() == pytest.approx(chaos.zeta_variance(spec, beta, k), rel=0.01)


@pytest.mark.parametrize("beta", [0.1, 0.05, 0.025, 0.0125])
def test_zeta_variance_near_one(beta):
    assert abs(chaos.zeta_variance(TailSpec.lomax(4.0), beta, 1 / beta) - 1.0) <= beta


def test_gaussian_cumulant_exact():
    assert chaos.cumulant(TailSpec.gaussian(), 0.4, math.inf) == pytest.approx(0.08, rel=1e-15)
    assert chaos.zeta_variance(TailSpec.gaussian(), 0.4, math.inf) == pytest.approx(math.expm1(0.16) / 0.16, rel=1e-14)


# expansion -----------------------------------------------------------------

def test_order_zero_is_one():
    env = polymer.generate_env(TailSpec.lomax(2.0), 9, 1)
    assert chaos.multilinear_sum(env, 0.5, 2.0, 0) == 1.0


def test_single_site_expansion():
    n = 1
    z = chaos.synthetic_zeta(n, 0.5, [0.0, 0.8])
    # one step to x = +1 with probability 1/2 and q = 0.5 * 0.8
    assert chaos.expansion_sum(z, 5) == pytest.approx(1.0 + 0.5 * 0.4, rel=1e-15)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(0, 4), st.integers(0, 2 ** 32))
def test_recursion_matches_tuple_enumeration(n, order, seed):
    rng = np.random.default_rng(seed)
    z = chaos.synthetic_zeta(n, 0.7, rng.normal(size=polymer.cone_size(n)))
    assert chaos.expansion_sum(z, order) == pytest.approx(chaos.expansion_sum_tuples(z, order), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_full_order_identity(seed):
    n, beta, k = 8, 0.9, 3.0
    env = polymer.generate_env(TailSpec.lomax(1.5), n, seed)
    lhs = chaos.multilinear_sum(env, beta, k, n)
    zeta = chaos.zeta_field(env, beta, k)
    rhs = math.exp(polymer.log_partition(polymer.truncated_env(env, k), beta).log_Z - n * zeta.lam)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_cost_guards():
    env = polymer.generate_env(TailSpec.lomax(4.0), 13, 0)
    zeta = chaos.zeta_field(env, 0.5, 2.0)
    with pytest.raises(CostGuardError):
        chaos.expansion_sum(zeta, 3)
    assert math.isfinite(chaos.expansion_sum(zeta, 2))
    with pytest.raises(CostGuardError):
        chaos.expansion_sum_tuples(chaos.zeta_field(polymer.generate_env(TailSpec.lomax(4.0), 9, 0), 0.5, 2.0), 2)


# first-order statistic -------------------------------------------------------

def test_first_order_zero_field():
    env = polymer.generate_env(TailSpec.lomax(4.0), 50, 0)
    z = chaos.synthetic_zeta(50, 0.1, np.zeros(polymer.cone_size(50)))
    assert chaos.first_order_stat(env, 0.1, 1.0, z) == 0.0


def test_first_order_variance_limit():
    assert chaos.first_order_variance(4096, 1.0) == pytest.approx(2 / math.sqrt(math.pi), rel=0.15)


def test_first_order_variance_by_sampling():
    n, reps = 256, 2000
    env = polymer.generate_env(TailSpec.gaussian(), n, 0)
    rng = np.random.default_rng(8)
    vals = [chaos.first_order_stat(env, 1.0, 1.0, chaos.synthetic_zeta(n, 1.0, rng.normal(size=polymer.cone_size(n))))
            for _ in range(reps)]
    target = chaos.first_order_variance(n, 1.0)
    se = target * math.sqrt(2 / (reps - 1))
    assert abs(np.var(vals, ddof=1) - target) < 3 * se
    # a linear form in Gaussians is Gaussian
    assert sps.kstest(vals, "norm", args=(0, math.sqrt(target))).pvalue > 1e-3


def test_first_order_mirror_symmetry():
    n = 40
    env = polymer.generate_env(TailSpec.lomax(4.0), n, 12)
    mirrored = np.concatenate([env.row(i)[::-1] for i in range(1, n + 1)])
    menv = polymer.Environment(n, env.seed, env.spec, mirrored)
    assert chaos.first_order_stat(menv, 0.2, 5.0) == pytest.approx(chaos.first_order_stat(env, 0.2, 5.0), rel=1e-12)
