import math

import mpmath
import numpy as np
import pytest

from debit.analysis import (BoundInputs, asymptotic_sum_rate, exp_integral_e1,
                            feasibility_probability, g_function, normal_cdf,
                            prop1_avg_sum_rate_lb, prop2_avg_harvest_lb, theorem2_bound)
from debit.model import Allocation, ChannelState, SystemParams, Targets, dbm_to_watts
from debit.model import draw_gains

from conftest import unit_params

mpmath.mp.dps = 40


def phi_quad(x):
    return mpmath.quad(lambda t: mpmath.exp(-t * t / 2), [-mpmath.inf, x]) / mpmath.sqrt(2 * mpmath.pi)


def e1_quad(x):
    return mpmath.quad(lambda t: mpmath.exp(-t) / t, [x, mpmath.inf])


def test_normal_cdf_values():
    assert normal_cdf(0.0) == 0.5
    assert normal_cdf(1.96) == pytest.approx(0.9750021, abs=1e-7)
    for x in np.linspace(-8, 8, 33):
        assert normal_cdf(x) + normal_cdf(-x) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("x", [-7.5, -3.0, -0.3, 0.7, 2.5, 6.0])
def test_normal_cdf_against_quadrature(x):
    assert abs(normal_cdf(x) - float(phi_quad(x))) <= 1e-12


def test_e1_values():
    assert exp_integral_e1(1.0) == pytest.approx(0.2193839, abs=1e-7)
    assert exp_integral_e1(0.001) == pytest.approx(6.33154, abs=1e-5)
    # series oracle near zero
    x = 1e-3
    series = -0.5772156649015329 - math.log(x) + x - x * x / 4
    assert exp_integral_e1(x) == pytest.approx(series, abs=1e-10)
    with pytest.raises(ValueError):
        exp_integral_e1(0.0)


@pytest.mark.parametrize("x", [1e-6, 0.01, 0.5, 0.999, 1.0, 1.001, 3.0, 20.0, 200.0])
def test_e1_against_quadrature(x):
    assert abs(exp_integral_e1(x) - float(e1_quad(x))) <= 1e-10


def test_e1_bound_and_derivative():
    for x in np.geomspace(1e-4, 50, 60):
        assert exp_integral_e1(x) < math.exp(-x) / x
        h = 1e-6 * x
        d = (exp_integral_e1(x + h) - exp_integral_e1(x - h)) / (2 * h)
        assert d == pytest.approx(-math.exp(-x) / x, rel=1e-6)


def test_g_function_values():
    assert g_function(0.0, 0.0, 1.0) == pytest.approx(0.7978846, abs=1e-7)
    assert g_function(5.0 - 10 * 2.0, 5.0, 2.0) == pytest.approx(5.0, abs=1e-9)
    with pytest.raises(OverflowError):
        g_function(100.0, 0.0, 1.0)


def test_g_function_dominates(rng):
    for _ in range(200):
        mu, sigma, zeta = rng.normal(), rng.uniform(0.1, 3), rng.normal(scale=3)
        assert g_function(zeta, mu, sigma) >= max(zeta, mu) - 1e-12


def test_g_function_truncated_normal_monte_carlo(rng):
    for _ in range(5):
        mu, sigma = rng.normal(), rng.uniform(0.2, 2)
        zeta = mu + sigma * rng.uniform(-2, 1.5)
        x = rng.normal(mu, sigma, 1_000_000)
        x = x[x >= zeta]
        se = x.std() / math.sqrt(x.size)
        assert abs(g_function(zeta, mu, sigma) - x.mean()) <= 3 * se


def test_theorem2_hand_value():
    # omega = 1, weakest |h|^2 = 1, received sum 3, unit noise, alpha = 0
    p = unit_params(K=2)
    ch = ChannelState.from_magnitudes([1.0, math.sqrt(2.0)])
    a = Allocation(0.0, 1.0, 1.0, np.zeros(2), np.zeros(2), np.ones(2))
    assert theorem2_bound(a, ch, p) == pytest.approx(0.6610, abs=1e-4)
    silent = Allocation(0.0, 1.0, 0.0, np.zeros(2), np.zeros(2), np.ones(2))
    assert theorem2_bound(silent, ch, p) == 0.0


def test_feasibility_probability_properties():
    for K in (4, 8, 16):
        p = SystemParams.paper_defaults(K)
        assert feasibility_probability(p, Targets()) >= 1 - 1e-6
    p = SystemParams.paper_defaults(8)
    vals = [feasibility_probability(p, Targets.from_dbm(d)) for d in range(-30, 0)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_feasibility_probability_monte_carlo():
    p = SystemParams.paper_defaults(8)
    rng = np.random.default_rng(7)
    for d in (-12, -10, -9):
        t = Targets.from_dbm(d)
        s = np.abs(draw_gains(rng, 8, p.channel_gain, size=10_000)).sum(axis=1)
        assert abs((s >= t.c0(p)).mean() - feasibility_probability(p, t)) <= 0.05


@pytest.mark.parametrize("z", [-2.0, -1.0, 0.0, 1.0])
def test_truncated_moment_approximations(z):
    # D1 ~ E[sum|h| | sum|h| >= c0]^2, D2 ~ E[sum|h|^2 | sum|h|^2 >= c0^2 / K] at K = 16
    K = 16
    p = SystemParams.paper_defaults(K)
    mu = math.sqrt(math.pi * p.channel_gain / 4.0)
    sd = math.sqrt((4.0 - math.pi) * p.channel_gain / 4.0)
    c0 = K * mu + z * math.sqrt(K) * sd
    t = Targets(p.efficiency * p.symmetric_power * c0 ** 2, 0.0)
    assert t.c0(p) == pytest.approx(c0)
    b = BoundInputs.build(p, t)
    h = np.abs(draw_gains(np.random.default_rng(3), K, p.channel_gain, size=200_000))
    s = h.sum(axis=1)
    q = (h ** 2).sum(axis=1)
    assert b.d1 == pytest.approx(s[s >= c0].mean() ** 2, rel=0.05)
    assert b.d2 == pytest.approx(q[q >= c0 ** 2 / K].mean(), rel=0.05)


def test_prop1_zero_target():
    b = prop1_avg_sum_rate_lb(SystemParams.paper_defaults(16), Targets()).inputs
    assert b.alpha_sub0 == 0.0
    assert b.p_fs == pytest.approx(1.0, abs=1e-9)


def test_prop1_regression_value():
    lb = prop1_avg_sum_rate_lb(SystemParams.paper_defaults(16), Targets.from_dbm(-12))
    assert lb.feasible
    assert lb.value == pytest.approx(3.2723262490009, rel=1e-9)


def test_prop1_warns_small_k_and_flags_infeasible():
    with pytest.warns(UserWarning):
        prop1_avg_sum_rate_lb(SystemParams.paper_defaults(4), Targets.from_dbm(-12))
    for dbm in (10, 30):
        lb = prop1_avg_sum_rate_lb(SystemParams.paper_defaults(8), Targets.from_dbm(dbm))
        assert not lb.feasible and lb.value == 0.0
    # far above the mean harvest the feasibility weight kills the bound
    lb = prop1_avg_sum_rate_lb(SystemParams.paper_defaults(8), Targets.from_dbm(0))
    assert lb.inputs.p_fs < 1e-3 and lb.value < 1e-2


def test_asymptotic_forms():
    p = SystemParams.paper_defaults(16)
    assert asymptotic_sum_rate(p, variant="limit27") == pytest.approx(0.5 * math.log2(101), abs=1e-12)
    assert asymptotic_sum_rate(p, variant="limit27") == pytest.approx(3.3291, abs=1e-4)
    assert asymptotic_sum_rate(p, variant="limit28") == 0.0
    # fixed relay budget: approx26 decays like 1/K
    vals = [asymptotic_sum_rate(SystemParams.paper_defaults(K, relay_power=8.0), variant="approx26")
            for K in (10, 100, 1000)]
    assert vals[0] > vals[1] > vals[2]
    G, P, s2, PR = 1e-5, 1.0, 1e-7, 8.0
    K = 10 ** 6
    assert 0.5 * math.log2(1 + K * G * P * PR / ((K * K * P + PR) * s2)) < 1e-3
    # relay budget K P: approaches the limit from below, monotone gap
    lim = asymptotic_sum_rate(p, variant="limit27")
    gaps = [lim - asymptotic_sum_rate(SystemParams.paper_defaults(K), variant="approx26")
            for K in (4, 8, 16, 32, 64, 128)]
    assert all(g > 0 for g in gaps) and all(a > b for a, b in zip(gaps, gaps[1:]))
    with pytest.raises(ValueError):
        asymptotic_sum_rate(SystemParams.paper_defaults(8, relay_power=3.0), variant="limit27")


def test_prop2_zero_rate_hand_value():
    v = prop2_avg_harvest_lb(SystemParams.paper_defaults(10), Targets())
    assert v.value == pytest.approx(math.pi / 4 * 0.7 * 1e-5 * 100, rel=1e-12)
    assert v.value == pytest.approx(5.4978e-4, rel=1e-4)


def test_prop2_simplified_below_full():
    for K in (4, 8, 10, 12, 32):
        p = SystemParams.paper_defaults(K)
        for r in np.linspace(0.05, 3.0, 25):
            t = Targets(0.0, float(r))
            full = prop2_avg_harvest_lb(p, t)
            simple = prop2_avg_harvest_lb(p, t, simplified=True)
            assert simple.value <= full.value + 1e-18


def test_prop2_infeasible_rate():
    v = prop2_avg_harvest_lb(SystemParams.paper_defaults(8), Targets(0.0, 12.0))
    assert not v.feasible and v.value == 0.0
