"""System constants, channel realizations and transceiver allocations.

All powers are in watts internally; dBm only appears at the boundaries
(CLI flags, presets, printed summaries).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

LN2 = math.log(2.0)


def dbm_to_watts(x: float) -> float:
    return 10.0 ** ((x - 30.0) / 10.0)


def watts_to_dbm(w: float) -> float:
    if w <= 0:
        return -math.inf
    return 10.0 * math.log10(w) + 30.0


def db_to_ratio(x: float) -> float:
    return 10.0 ** (x / 10.0)


def gain_from_distance(d: float) -> float:
    """Average channel power gain 10^-2 d^-3 for a user at distance d (m)."""
    return 1e-2 * d ** -3


@dataclass(frozen=True)
class SystemParams:
    """Static network constants.

    ``user_power`` may be given as a scalar (symmetric network) or as one
    budget per user; it is always stored as a tuple of length K.
    """

    num_users: int
    user_power: tuple[float, ...] | float
    relay_power: float
    peak_power: float
    antenna_noise: float
    conversion_noise: float
    relay_noise: float
    user_noise: float
    efficiency: float
    channel_gain: float
    phase_duration: float = 1.0
    distance: float | None = None

    def __post_init__(self):
        K = int(self.num_users)
        if K < 2:
            raise ValueError(f"need at least 2 users, got {K}")
        p = self.user_power
        if np.isscalar(p):
            p = (float(p),) * K
        p = tuple(float(v) for v in p)
        if len(p) != K:
            raise ValueError(f"user_power has {len(p)} entries for {K} users")
        object.__setattr__(self, "num_users", K)
        object.__setattr__(self, "user_power", p)

        for name in ("relay_power", "peak_power", "antenna_noise",
                     "conversion_noise", "relay_noise", "user_noise",
                     "channel_gain", "phase_duration"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if min(p) <= 0:
            raise ValueError("user powers must be positive")
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError(f"efficiency must lie in [0, 1], got {self.efficiency}")
        if self.peak_power < max(p) * (1 - 1e-12):
            raise ValueError("peak power must be at least the average user power")

    @classmethod
    def paper_defaults(cls, num_users: int = 8, **overrides) -> "SystemParams":
        """Simulation setup used for the published figures.

        P = 30 dBm, P_R = K P, P_peak = 10 P, antenna/conversion noise
        -43 dBm, relay/user noise -40 dBm, eta = 0.7, d = 10 m.
        """
        P = dbm_to_watts(30.0)
        d = overrides.pop("distance", 10.0)
        kw = dict(
            num_users=num_users,
            user_power=P,
            relay_power=num_users * P,
            peak_power=10.0 * P,
            antenna_noise=dbm_to_watts(-43.0),
            conversion_noise=dbm_to_watts(-43.0),
            relay_noise=dbm_to_watts(-40.0),
            user_noise=dbm_to_watts(-40.0),
            efficiency=0.7,
            channel_gain=gain_from_distance(d),
            phase_duration=1.0,
            distance=d,
        )
        kw.update(overrides)
        return cls(**kw)

    @property
    def powers(self) -> np.ndarray:
        return np.asarray(self.user_power)

    @property
    def symmetric_power(self) -> float:
        """The common budget P of a symmetric network."""
        p = self.user_power
        if max(p) - min(p) > 1e-12 * max(p):
            raise ValueError("per-user budgets differ; network is not symmetric")
        return p[0]

    @property
    def max_energy_fraction(self) -> float:
        """Largest time split compatible with full-peak energy symbols."""
        return min(1.0, min(self.user_power) / self.peak_power)

    def first_subphase_noise(self, theta: float) -> float:
        """Baseband relay noise after the power splitter."""
        return (1.0 - theta) * self.antenna_noise + self.conversion_noise


@dataclass(frozen=True)
class ChannelState:
    """One fading realization. Users are indexed 0..K-1."""

    gains: np.ndarray
    magnitudes: np.ndarray = field(repr=False)
    sort_order: np.ndarray = field(repr=False)

    @classmethod
    def from_gains(cls, gains) -> "ChannelState":
        h = np.array(gains, dtype=complex).ravel()
        mag = np.abs(h)
        order = np.argsort(mag, kind="stable")
        for a in (h, mag, order):
            a.setflags(write=False)
        return cls(h, mag, order)

    @classmethod
    def from_magnitudes(cls, magnitudes) -> "ChannelState":
        return cls.from_gains(np.asarray(magnitudes, dtype=float))

    @property
    def num_users(self) -> int:
        return self.gains.size

    @property
    def power_gains(self) -> np.ndarray:
        return self.magnitudes ** 2


def draw_gains(rng: np.random.Generator, num_users: int, avg_gain: float,
               size: int | None = None) -> np.ndarray:
    """Circularly-symmetric complex Gaussian gains with E|h|^2 = avg_gain."""
    shape = (num_users,) if size is None else (size, num_users)
    scale = math.sqrt(avg_gain / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sample_channels(params: SystemParams, seed: int | Sequence[int]) -> ChannelState:
    """Rayleigh realization for ``params``; the same seed gives the same state."""
    rng = np.random.default_rng(seed)
    return ChannelState.from_gains(draw_gains(rng, params.num_users, params.channel_gain))


def sorted_min_gain(ch: ChannelState) -> float:
    """|h_pi(1)|^2, the power gain of the weakest user."""
    return float(ch.magnitudes[ch.sort_order[0]] ** 2)


@dataclass(frozen=True)
class Allocation:
    """A complete transceiver decision.

    time_split is the fraction of the MAC phase spent in the energy subphase,
    power_split the fraction of first-subphase power routed to the harvester.
    """

    time_split: float
    power_split: float
    relay_gain: float
    energy_powers: np.ndarray
    info_powers_1: np.ndarray
    info_powers_2: np.ndarray

    def __post_init__(self):
        for name in ("energy_powers", "info_powers_1", "info_powers_2"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if not 0.0 <= self.time_split <= 1.0:
            raise ValueError(f"time split {self.time_split} outside [0, 1]")
        if not 0.0 <= self.power_split <= 1.0:
            raise ValueError(f"power split {self.power_split} outside [0, 1]")
        if self.relay_gain < 0:
            raise ValueError("relay gain must be nonnegative")

    # short aliases used throughout the formulas
    @property
    def alpha(self) -> float:
        return self.time_split

    @property
    def theta(self) -> float:
        return self.power_split

    @property
    def omega(self) -> float:
        return self.relay_gain

    def to_dict(self) -> dict:
        return {
            "time_split": self.time_split,
            "power_split": self.power_split,
            "relay_gain": self.relay_gain,
            "energy_powers": self.energy_powers.tolist(),
            "info_powers_1": self.info_powers_1.tolist(),
            "info_powers_2": self.info_powers_2.tolist(),
        }


def allocation_violations(alloc: Allocation, ch: ChannelState,
                          params: SystemParams) -> dict[str, float]:
    """Normalized constraint violations of ``alloc`` (0 means satisfied).

    budget: max relative deviation from the per-user average-power equality;
    peak: relative excess of first-subphase power over the peak limit;
    relay: relative excess of relay transmit power over its budget;
    negative: most negative power, relative to the peak limit.
    """
    from .perf import relay_power_used

    a = alloc.alpha
    P = params.powers
    e = alloc.energy_powers + alloc.info_powers_1
    spent = a * e + (1 - a) * alloc.info_powers_2
    budget = float(np.max(np.abs(spent - P) / P))
    # a silent subphase cannot violate the peak limit
    peak = float(max(0.0, np.max(e) / params.peak_power - 1.0)) if a > 0 else 0.0
    relay = max(0.0, relay_power_used(alloc, ch, params) / params.relay_power - 1.0)
    lowest = min(alloc.energy_powers.min(), alloc.info_powers_1.min(),
                 alloc.info_powers_2.min())
    negative = max(0.0, -lowest / params.peak_power)
    return {"budget": budget, "peak": peak, "relay": relay, "negative": negative}


def validate_allocation(alloc: Allocation, ch: ChannelState, params: SystemParams,
                        rtol: float = 1e-9) -> None:
    """Raise ValueError if ``alloc`` breaks the budget, peak or relay limits."""
    if alloc.energy_powers.size != params.num_users or ch.num_users != params.num_users:
        raise ValueError("allocation, channel and parameters disagree on K")
    bad = {k: v for k, v in allocation_violations(alloc, ch, params).items() if v > rtol}
    if bad:
        details = ", ".join(f"{k}={v:.3g}" for k, v in bad.items())
        raise ValueError(f"allocation violates constraints: {details}")


@dataclass(frozen=True)
class Targets:
    """Harvest and sum-rate targets; derived quantities are computed on demand."""

    target_harvest: float = 0.0
    target_sum_rate: float = 0.0

    def __post_init__(self):
        if self.target_harvest < 0 or self.target_sum_rate < 0:
            raise ValueError("targets must be nonnegative")

    @classmethod
    def from_dbm(cls, harvest_dbm: float | None = None,
                 sum_rate: float = 0.0) -> "Targets":
        h = 0.0 if harvest_dbm is None else dbm_to_watts(harvest_dbm)
        return cls(h, sum_rate)

    @property
    def xi0(self) -> float:
        return 2.0 ** (2.0 * self.target_sum_rate) - 1.0

    def nu0(self, params: SystemParams) -> float:
        return self.xi0 * params.user_noise / (params.channel_gain * params.symmetric_power)

    def c0(self, params: SystemParams) -> float:
        if params.efficiency == 0:
            return 0.0 if self.target_harvest == 0 else math.inf
        return math.sqrt(self.target_harvest / (params.efficiency * params.symmetric_power))
