"""Closed-form performance bounds and the special functions they need.

Per-realization sum-rate bound of the suboptimal sum-rate design, its
large-K average with the normal approximation of sum_k |h_k|, the
asymptotic forms of that average, and the average harvested-power bound
of the suboptimal harvest design.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .model import ChannelState, SystemParams, Targets
from .perf import capacity

EULER_GAMMA = 0.57721566490153286061
TAIL_FLOOR = 1e-300


def normal_cdf(x: float) -> float:
    """Standard normal CDF through erfc (no cancellation in either tail)."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def normal_sf(x: float) -> float:
    """1 - Phi(x), accurate for large positive x."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def exp_integral_e1(x: float) -> float:
    """E1(x) = int_x^inf exp(-t)/t dt for x > 0.

    Power series for x <= 1, modified Lentz evaluation of the continued
    fraction otherwise.
    """
    if not x > 0:
        raise ValueError(f"E1 needs x > 0, got {x}")
    if math.isinf(x):
        return 0.0
    if x <= 1.0:
        # E1(x) = -gamma - ln x - sum_{n>=1} (-x)^n / (n n!)
        total, term = 0.0, 1.0
        for n in range(1, 60):
            term *= -x / n
            total += term / n
            if abs(term) < 1e-18:
                break
        return -EULER_GAMMA - math.log(x) - total
    # E1(x) = exp(-x) / (x + 1 - 1/(x + 3 - 4/(x + 5 - ...)))
    tiny = 1e-300
    b = x + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    f = d
    for i in range(1, 500):
        an = -float(i * i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return f * math.exp(-x)


def g_function(zeta: float, mu: float, sigma: float) -> float:
    """Mean of N(mu, sigma^2) truncated below at zeta."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    z = (zeta - mu) / sigma
    tail = normal_sf(z)
    if tail < TAIL_FLOOR:
        raise OverflowError(f"truncation probability below {TAIL_FLOOR:g} at z = {z:g}")
    return mu + sigma * math.exp(-0.5 * z * z) / (math.sqrt(2.0 * math.pi) * tail)


@dataclass(frozen=True)
class BoundInputs:
    """Large-K quantities shared by the average bounds."""

    mu_h: float
    sigma_h: float
    c0: float
    xi0: float
    nu0: float
    d1: float
    d2: float
    alpha_sub0: float
    omega_sub0: float
    p_sub0: float
    p_fs: float

    @classmethod
    def build(cls, params: SystemParams, targets: Targets) -> "BoundInputs":
        K = params.num_users
        G = params.channel_gain
        P = params.symmetric_power
        mu_h = math.sqrt(math.pi * G / 4.0)
        sigma_h = math.sqrt((4.0 - math.pi) * G / 4.0)
        c0 = targets.c0(params)
        sk = math.sqrt(K)
        p_fs = _feasibility(K, c0, mu_h, sigma_h)
        d1 = K * g_function(c0 / sk, math.sqrt(K * math.pi * G / 4.0), sigma_h) ** 2
        d2 = sk * g_function(c0 ** 2 / (K * sk), sk * G, G)
        alpha = targets.target_harvest / (params.efficiency * params.peak_power * d1)
        p_sub = (P - alpha * params.peak_power) / (1.0 - alpha) if alpha < 1 else 0.0
        spare = P - alpha * params.peak_power
        omega = params.relay_power / (spare * d2) if spare > 0 else math.inf
        return cls(mu_h, sigma_h, c0, targets.xi0, targets.nu0(params), d1, d2,
                   alpha, omega, p_sub, p_fs)


def _feasibility(K, c0, mu_h, sigma_h) -> float:
    if c0 <= 0:
        return 1.0  # no harvest target: every realization is feasible
    sk = math.sqrt(K)
    return normal_sf(c0 / (sk * sigma_h) - sk * mu_h / sigma_h)


def feasibility_probability(params: SystemParams, targets: Targets) -> float:
    """Normal approximation of Pr[sum_k |h_k| >= c0]."""
    G = params.channel_gain
    mu_h = math.sqrt(math.pi * G / 4.0)
    sigma_h = math.sqrt((4.0 - math.pi) * G / 4.0)
    return _feasibility(params.num_users, targets.c0(params), mu_h, sigma_h)


def theorem2_bound(sol, ch: ChannelState, params: SystemParams) -> float:
    """Per-realization sum-rate lower bound of the suboptimal design.

    ``sol`` is a Solution (or Allocation) from the closed-form design with
    theta = 1 and equal second-subphase powers.
    """
    alloc = getattr(sol, "alloc", sol)
    if alloc is None:
        return 0.0
    g = ch.power_gains
    g1 = float(g.min())
    om = alloc.omega
    signal = om * g1 * float(g @ alloc.info_powers_2)
    noise = om * g1 * params.relay_noise + params.user_noise
    return float((1.0 - alloc.alpha) * capacity(signal / noise))


@dataclass(frozen=True)
class BoundValue:
    value: float
    feasible: bool
    inputs: BoundInputs | None = None


def prop1_avg_sum_rate_lb(params: SystemParams, targets: Targets) -> BoundValue:
    """Large-K lower bound on the average sum rate at a harvest target."""
    K = params.num_users
    if K < 8:
        warnings.warn("average sum-rate bound is a large-K approximation (K < 8)", stacklevel=2)
    try:
        b = BoundInputs.build(params, targets)
    except OverflowError:
        # target so far above the mean that the bound is zero in double precision
        return BoundValue(0.0, False, None)
    if b.alpha_sub0 >= min(1.0, params.max_energy_fraction) or not math.isfinite(b.omega_sub0):
        return BoundValue(0.0, False, b)
    snr = params.channel_gain * params.relay_power / (
        (K + params.channel_gain * b.omega_sub0) * (1.0 - b.alpha_sub0) * params.user_noise)
    return BoundValue(float(b.p_fs * (1.0 - b.alpha_sub0) * capacity(snr)), True, b)


ASYMPTOTIC_VARIANTS = ("approx26", "limit27", "limit28")


def asymptotic_sum_rate(params: SystemParams, targets: Targets | None = None,
                        variant: str = "approx26") -> float:
    """Large-K forms of the average sum-rate bound (targets are negligible).

    approx26: C(K G P P_R / ((K^2 P + P_R) sigma^2)); limit27: the K -> inf
    limit C(P G / sigma^2) when P_R = K P; limit28: 0 for a fixed relay budget.
    """
    K = params.num_users
    G = params.channel_gain
    P = params.symmetric_power
    s2 = params.user_noise
    if variant == "approx26":
        return float(capacity(K * G * P * params.relay_power / ((K * K * P + params.relay_power) * s2)))
    if variant == "limit27":
        if abs(params.relay_power - K * P) > 1e-9 * K * P:
            raise ValueError("limit27 assumes a relay budget of K P")
        return float(capacity(P * G / s2))
    if variant == "limit28":
        return 0.0
    raise ValueError(f"unknown variant {variant!r}; choose from {ASYMPTOTIC_VARIANTS}")


def _nu_e1(nu0: float, K: int) -> float:
    """nu0 E1(nu0 / K), with its limit 0 at nu0 = 0."""
    return 0.0 if nu0 == 0 else nu0 * exp_integral_e1(nu0 / K)


def prop2_avg_harvest_lb(params: SystemParams, targets: Targets,
                         simplified: bool = False) -> BoundValue:
    """Large-K lower bound on the average harvested power at a sum-rate target.

    ``simplified`` uses E1(x) < 1/x, which gives a smaller value.
    """
    K = params.num_users
    G = params.channel_gain
    P = params.symmetric_power
    nu0 = targets.nu0(params)
    if simplified:
        bracket = (1.0 - nu0) * K * K - nu0 * K
    else:
        bracket = K * K - nu0 * (1.0 + _nu_e1(nu0, K)) * K
    if bracket < 0:
        return BoundValue(0.0, False)
    value = math.pi / 4.0 * params.efficiency * G * P * bracket * math.exp(-nu0)
    return BoundValue(float(value), True)
