"""Physical-layer quantities: harvested power, relay power, cut-set rates.

Subsets of users are bitmasks: bit m set means user m is in S.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .model import LN2, Allocation, ChannelState, SystemParams

FULL_ENUMERATION_MAX_USERS = 16


def capacity(x):
    """C(x) = 1/2 log2(1 + x), accurate for small x."""
    return 0.5 * np.log1p(x) / LN2


def as_mask(S: int | Iterable[int]) -> int:
    if isinstance(S, (int, np.integer)):
        return int(S)
    mask = 0
    for m in S:
        mask |= 1 << int(m)
    return mask


def mask_members(mask: int, num_users: int) -> list[int]:
    return [m for m in range(num_users) if mask >> m & 1]


def subset_sums(w: np.ndarray) -> np.ndarray:
    """Sums of ``w`` over every subset, indexed by bitmask (last axis)."""
    w = np.asarray(w, dtype=float)
    K = w.shape[-1]
    out = np.zeros(w.shape[:-1] + (1 << K,))
    for i in range(K):
        lo = 1 << i
        out[..., lo:2 * lo] = out[..., :lo] + w[..., i:i + 1]
    return out


def membership_matrix(num_users: int) -> np.ndarray:
    """Row ``mask`` holds the 0/1 membership vector of that subset."""
    masks = np.arange(1 << num_users)
    return ((masks[:, None] >> np.arange(num_users)) & 1).astype(float)


def harvested_power(alloc: Allocation, ch: ChannelState, eta: float) -> float:
    """Power harvested at the relay during the energy subphase (W)."""
    h = ch.magnitudes
    beam = float(np.sqrt(alloc.energy_powers) @ h) ** 2
    info = float(alloc.info_powers_1 @ h ** 2)
    return alloc.alpha * alloc.theta * eta * (beam + info)


def relay_power_used(alloc: Allocation, ch: ChannelState, params: SystemParams) -> float:
    """Average relay transmit power; must not exceed P_R."""
    g = ch.power_gains
    a, th = alloc.alpha, alloc.theta
    first = (1 - th) * float(alloc.info_powers_1 @ g) + params.first_subphase_noise(th)
    second = float(alloc.info_powers_2 @ g) + params.relay_noise
    return alloc.omega * (a * first + (1 - a) * second)


def sinr_coefficients(alloc: Allocation, ch: ChannelState, params: SystemParams):
    """Per-receiver SINR per unit of received interferer power, both subphases.

    R_{k,S} = a C(c1[k] A_S) + (1-a) C(c2[k] B_S), A_S and B_S being the
    received information powers of S in the two subphases.
    """
    return _coefficients(alloc.alpha, alloc.theta, alloc.omega, ch.power_gains, params)


def _coefficients(alpha, theta, omega, g, params: SystemParams):
    s2 = params.user_noise
    c1 = (1 - theta) * omega * g / (omega * g * params.first_subphase_noise(theta) + s2)
    c2 = omega * g / (omega * g * params.relay_noise + s2)
    return c1, c2


def rate_k_S(alloc: Allocation, ch: ChannelState, params: SystemParams,
             k: int, S: int | Iterable[int]) -> float:
    """Cut rate R_{k,S}: what receiver k can decode of the users in S."""
    mask = as_mask(S)
    K = ch.num_users
    if mask >> k & 1:
        raise ValueError(f"receiver {k} cannot belong to S")
    if mask >= 1 << K:
        raise ValueError("S contains unknown users")
    members = mask_members(mask, K)
    g = ch.power_gains
    c1, c2 = sinr_coefficients(alloc, ch, params)
    A = float(np.sum(g[members] * alloc.info_powers_1[members]))
    B = float(np.sum(g[members] * alloc.info_powers_2[members]))
    a = alloc.alpha
    return float(a * capacity(c1[k] * A) + (1 - a) * capacity(c2[k] * B))


def rate_table(alloc: Allocation, ch: ChannelState, params: SystemParams) -> np.ndarray:
    """All cut rates as a (K, 2^K) array; NaN where k is in S or S is empty."""
    K = ch.num_users
    if K > FULL_ENUMERATION_MAX_USERS:
        raise MemoryError(f"full enumeration supports K <= {FULL_ENUMERATION_MAX_USERS}, got {K}")
    g = ch.power_gains
    c1, c2 = sinr_coefficients(alloc, ch, params)
    A = subset_sums(g * alloc.info_powers_1)
    B = subset_sums(g * alloc.info_powers_2)
    a = alloc.alpha
    F = a * capacity(c1[:, None] * A[None, :]) + (1 - a) * capacity(c2[:, None] * B[None, :])
    masks = np.arange(1 << K)
    inside = (masks[None, :] >> np.arange(K)[:, None]) & 1
    F[inside.astype(bool)] = np.nan
    F[:, 0] = np.nan
    return F


def binding_bounds(table: np.ndarray) -> np.ndarray:
    """Tightest bound on each subset sum over all receivers outside S.

    Entry 0 (empty set) and the full set are +inf: they constrain nothing.
    """
    with np.errstate(invalid="ignore"):
        b = np.nanmin(np.where(np.isnan(table), np.inf, table), axis=0)
    return b


@dataclass(frozen=True)
class RateBoundSet:
    """Cut-set constraints sum_{m in S} R_m <= R_{k,S} for a fixed allocation."""

    num_users: int
    users: np.ndarray
    masks: np.ndarray
    values: np.ndarray
    mode: str

    def __len__(self) -> int:
        return self.values.size

    def get(self, k: int, S) -> float:
        mask = as_mask(S)
        hit = np.flatnonzero((self.users == k) & (self.masks == mask))
        if hit.size == 0:
            raise KeyError((k, mask))
        return float(self.values[hit[0]])

    def as_dict(self) -> dict[tuple[int, int], float]:
        return {(int(k), int(m)): float(v)
                for k, m, v in zip(self.users, self.masks, self.values)}

    def max_violation(self, rates) -> float:
        """Largest excess of a subset sum over its bound (<= 0 when satisfied)."""
        sums = subset_sums(np.asarray(rates, dtype=float))[self.masks]
        return float(np.max(sums - self.values)) if len(self) else 0.0


def restricted_family(weights: np.ndarray, k: int) -> list[int]:
    """Singletons, the full set and nested heaviest-first subsets for receiver k."""
    K = weights.size
    others = [m for m in range(K) if m != k]
    masks = {1 << m for m in others}
    order = sorted(others, key=lambda m: (-weights[m], m))
    acc = 0
    for m in order:
        acc |= 1 << m
        masks.add(acc)
    return sorted(masks)


def build_rate_bounds(alloc: Allocation, ch: ChannelState, params: SystemParams,
                      mode: str = "full") -> RateBoundSet:
    K = ch.num_users
    if mode == "full":
        F = rate_table(alloc, ch, params)
        k_idx, masks = np.nonzero(~np.isnan(F))
        vals = F[k_idx, masks]
    elif mode == "restricted":
        g = ch.power_gains
        a = alloc.alpha
        w = g * (a * alloc.info_powers_1 + (1 - a) * alloc.info_powers_2)
        pairs = [(k, m) for k in range(K) for m in restricted_family(w, k)]
        k_idx = np.array([p[0] for p in pairs])
        masks = np.array([p[1] for p in pairs])
        vals = np.array([rate_k_S(alloc, ch, params, k, m) for k, m in pairs])
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return RateBoundSet(K, k_idx.astype(int), masks.astype(np.int64), vals, mode)


def sic_sum_rate(alloc: Allocation, ch: ChannelState, params: SystemParams) -> float:
    """Sum rate reached when every user decodes in the order of increasing gain.

    The weakest user's receiver limits everyone else; the weakest user is
    in turn decoded first at the second-weakest user, all others treated
    as noise.
    """
    K = ch.num_users
    order = ch.sort_order
    w1, w2 = int(order[0]), int(order[1])
    others = [int(m) for m in order[1:]]
    head = rate_k_S(alloc, ch, params, w1, others)

    g = ch.power_gains
    a, th, om = alloc.alpha, alloc.theta, alloc.omega
    s2 = params.user_noise
    rest = [int(m) for m in order[2:]]
    A_rest = float(np.sum(g[rest] * alloc.info_powers_1[rest])) if rest else 0.0
    B_rest = float(np.sum(g[rest] * alloc.info_powers_2[rest])) if rest else 0.0
    sig1 = (1 - th) * om * g[w2] * g[w1] * alloc.info_powers_1[w1]
    den1 = om * g[w2] * ((1 - th) * A_rest + params.first_subphase_noise(th)) + s2
    sig2 = om * g[w2] * g[w1] * alloc.info_powers_2[w1]
    den2 = om * g[w2] * (B_rest + params.relay_noise) + s2
    tail = a * capacity(sig1 / den1) + (1 - a) * capacity(sig2 / den2)
    return float(head + tail)
