"""Transceiver design: sum-rate maximization (P1, P2), harvest maximization
(P3, P4) and a conventional power-splitting baseline.

P1 and P3 search the time split alpha, power split theta and relay gain
omega; for each fixed triple the remaining problem over the powers and
rates is convex and is handed to the cutting-plane solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .model import (LN2, Allocation, ChannelState, SystemParams, Targets,
                    allocation_violations)
from .perf import (FULL_ENUMERATION_MAX_USERS, _coefficients, build_rate_bounds,
                   capacity, harvested_power, membership_matrix, subset_sums)
from .solvers import (INFEASIBLE, ITERATION_LIMIT, OPTIMAL, LinearProgram,
                      SolverReport, solve_concave_program, solve_lp)
from .solvers.lp import LPSession

CONVEX_MAX_USERS = 10


@dataclass
class Solution:
    """Outcome of one design problem on one channel realization."""

    alloc: Allocation | None
    rates: np.ndarray
    sum_rate: float
    harvested: float
    feasible: bool
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def infeasible(cls, num_users: int, harvested: float = 0.0, alloc=None, **diag) -> "Solution":
        return cls(alloc, np.zeros(num_users), 0.0, harvested, False, diag)

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "sum_rate": self.sum_rate,
            "rates": [float(r) for r in self.rates],
            "harvested_w": self.harvested,
            "allocation": None if self.alloc is None else self.alloc.to_dict(),
        }


@dataclass(frozen=True)
class SearchConfig:
    """Knobs of the (alpha, theta, omega) search used by P1 and P3.

    tol is the feasibility tolerance of the convex inner solves and gap_tol
    their relative optimality gap; the outer search stops refining once a
    step of ``search_tol`` in every normalized coordinate fails to improve.
    """

    theta_points: int = 2
    alpha_points: int = 3
    omega_points: int = 2
    search_tol: float = 0.05
    tol: float = 1e-7
    gap_tol: float = 1e-5
    max_cuts: int = 500
    max_evaluations: int = 400
    lp_method: str = "simplex"


# --------------------------------------------------------------------------
# rate region at fixed powers
# --------------------------------------------------------------------------

def subset_bounds(alloc: Allocation, ch: ChannelState, params: SystemParams,
                  masks: np.ndarray | None = None) -> np.ndarray:
    """min over receivers k outside S of R_{k,S}, for every mask (or ``masks``).

    Since every R_{k,S} grows with |h_k|, the binding receiver is the weakest
    user outside S, but the minimum is taken explicitly.
    """
    K = ch.num_users
    g = ch.power_gains
    c1, c2 = _coefficients(alloc.alpha, alloc.theta, alloc.omega, g, params)
    a = alloc.alpha
    if masks is None:
        if K > FULL_ENUMERATION_MAX_USERS:
            raise MemoryError(f"full enumeration supports K <= {FULL_ENUMERATION_MAX_USERS}")
        A = subset_sums(g * alloc.info_powers_1)
        B = subset_sums(g * alloc.info_powers_2)
        masks = np.arange(1 << K)
    else:
        masks = np.asarray(masks, dtype=np.int64)
        member = ((masks[:, None] >> np.arange(K)) & 1).astype(float)
        A = member @ (g * alloc.info_powers_1)
        B = member @ (g * alloc.info_powers_2)
    out = np.full(masks.size, np.inf)
    for k in range(K):
        outside = ((masks >> k) & 1) == 0
        if a > 0:
            fk = a * capacity(c1[k] * A[outside])
        else:
            fk = np.zeros(int(outside.sum()))
        if a < 1:
            fk = fk + (1 - a) * capacity(c2[k] * B[outside])
        out[outside] = np.minimum(out[outside], fk)
    full = (1 << K) - 1
    out[(masks == 0) | (masks == full)] = np.inf
    return out


@dataclass
class RegionResult:
    rates: np.ndarray
    sum_rate: float
    report: SolverReport
    rounds: int
    max_violation: float


def max_sum_rate(alloc: Allocation, ch: ChannelState, params: SystemParams,
                 tol: float = 1e-9, method: str = "simplex",
                 audit_samples: int = 1000, seed: int = 0) -> RegionResult:
    """Largest sum rate in the cut-set region of a fixed allocation.

    Row generation: start from singletons and all (K-1)-subsets, then add
    the most violated subset constraints until none is violated. For
    K <= 16 separation is exact over all 2^K - 2 subsets; above that the
    restricted family is used and ``audit_samples`` random subsets are
    checked in addition.
    """
    K = ch.num_users
    full = (1 << K) - 1
    exact = K <= FULL_ENUMERATION_MAX_USERS
    if exact:
        bounds_all = subset_bounds(alloc, ch, params)
        single = bounds_all[1 << np.arange(K)]
    else:
        single = subset_bounds(alloc, ch, params, 1 << np.arange(K))
    start = [int(full ^ (1 << k)) for k in range(K)]
    if not exact:
        rb = build_rate_bounds(alloc, ch, params, mode="restricted")
        start = sorted(set(start) | {int(m) for m in rb.masks})
    start = np.array([m for m in start if m != full and m != 0], dtype=np.int64)
    rhs = bounds_all[start] if exact else subset_bounds(alloc, ch, params, start)

    lp = LinearProgram(np.ones(K), np.zeros((0, K)), [], [],
                       [(0.0, max(float(b), 0.0)) for b in single])
    session = LPSession(lp, tol) if method in ("simplex", "dual") else None
    rows_A = [((m >> np.arange(K)) & 1).astype(float) for m in start]
    rows_b = list(rhs)
    if session is not None:
        session.add_rows(np.array(rows_A), rows_b)
    present = set(int(m) for m in start) | {int(1 << k) for k in range(K)}
    rng = np.random.default_rng(seed)
    rounds = 0
    while True:
        rounds += 1
        if session is not None:
            rep = session.solve()
        else:
            rep = solve_lp(LinearProgram(np.ones(K), np.array(rows_A), ["<="] * len(rows_A),
                                         rows_b, lp.bounds), tol, method)
        if rep.status != OPTIMAL:
            raise RuntimeError(f"rate-region LP failed: {rep.status}")
        R = rep.solution
        if exact:
            masks = np.arange(1 << K)
            excess = subset_sums(R) - bounds_all
            excess[[0, full]] = -np.inf
            values = None
        else:
            masks = np.unique(rng.integers(1, full, size=audit_samples))
            member = ((masks[:, None] >> np.arange(K)) & 1).astype(float)
            values = subset_bounds(alloc, ch, params, masks)
            excess = member @ R - values
        bad = np.flatnonzero(excess > tol)
        if bad.size == 0:
            viol = max(0.0, float(np.max(excess)))
            return RegionResult(R, float(R.sum()), rep, rounds, viol)
        bad = bad[np.argsort(-excess[bad], kind="stable")[:4 * K]]
        new_A, new_b = [], []
        for i in bad:
            m = int(masks[i])
            if m in present:
                continue
            present.add(m)
            new_A.append(((m >> np.arange(K)) & 1).astype(float))
            new_b.append(float(bounds_all[m] if exact else values[i]))
        if not new_A:
            raise RuntimeError("rate-region row generation stalled")
        rows_A += new_A
        rows_b += new_b
        if session is not None:
            session.add_rows(np.array(new_A), new_b)


def _finish(params: SystemParams, ch: ChannelState, alloc: Allocation, lp_method="simplex",
            **diag) -> Solution:
    """Rates from the exact region LP at ``alloc``, plus certification data."""
    region = max_sum_rate(alloc, ch, params, method=lp_method)
    diag = dict(diag)
    diag["region_rounds"] = region.rounds
    diag["violations"] = allocation_violations(alloc, ch, params)
    diag["rate_violation"] = region.max_violation
    return Solution(alloc, region.rates, float(region.rates.sum()),
                    harvested_power(alloc, ch, params.efficiency), True, diag)


# --------------------------------------------------------------------------
# P2: closed-form suboptimal sum-rate design
# --------------------------------------------------------------------------

def p2_time_split(params: SystemParams, ch: ChannelState, targets: Targets) -> float:
    """alpha_sub: shortest energy subphase meeting the target at peak power."""
    S = float(ch.magnitudes.sum())
    if targets.target_harvest == 0:
        return 0.0
    if params.efficiency == 0 or S == 0:
        return math.inf
    return targets.target_harvest / (params.efficiency * params.peak_power * S ** 2)


def p2_allocation(params: SystemParams, ch: ChannelState, alpha: float) -> Allocation:
    """Energy at peak power, theta = 1, remaining budget in the second subphase
    and the relay gain that spends the relay budget exactly."""
    K = params.num_users
    P = params.powers
    pe = np.full(K, params.peak_power)
    p2 = (P - alpha * pe) / (1 - alpha) if alpha < 1 else np.zeros(K)
    load = alpha * params.first_subphase_noise(1.0) + (1 - alpha) * (
        float(p2 @ ch.power_gains) + params.relay_noise)
    return Allocation(alpha, 1.0, params.relay_power / load, pe, np.zeros(K), p2)


def solve_p2_suboptimal(params: SystemParams, ch: ChannelState, targets: Targets,
                        lp_method: str = "simplex") -> Solution:
    alpha = p2_time_split(params, ch, targets)
    a_max = params.max_energy_fraction
    if alpha > a_max * (1 + 1e-12):
        # report what the longest admissible energy subphase would deliver
        clamp = p2_allocation(params, ch, a_max)
        return Solution.infeasible(params.num_users, harvested_power(clamp, ch, params.efficiency),
                                   time_split=alpha, reason="harvest target out of reach")
    alpha = min(alpha, a_max)
    return _finish(params, ch, p2_allocation(params, ch, alpha), lp_method, time_split=alpha)


# --------------------------------------------------------------------------
# P1 / P3 inner convex problem at fixed (alpha, theta, omega)
# --------------------------------------------------------------------------

class _Instance:
    """Per-realization data shared by every inner solve."""

    def __init__(self, params: SystemParams, ch: ChannelState):
        K = params.num_users
        if ch.num_users != K:
            raise ValueError("channel and parameters disagree on K")
        self.params = params
        self.ch = ch
        self.K = K
        self.g = ch.power_gains
        self.h = ch.magnitudes
        self.P = params.powers
        full = (1 << K) - 1
        masks = np.arange(1, full, dtype=np.int64)
        self.masks = masks
        self.member = membership_matrix(K)[masks]
        # outside[k, i]: receiver k may decode subset i
        self.outside = self.member.T == 0

    def energy_limit(self, alpha: float) -> np.ndarray:
        return np.minimum(self.params.peak_power, self.P / alpha) if alpha > 0 else np.zeros(self.K)

    def relay_load(self, alpha, theta, p1, p2) -> float:
        pr = self.params
        return alpha * ((1 - theta) * float(self.g @ p1) + pr.first_subphase_noise(theta)) + \
            (1 - alpha) * (float(self.g @ p2) + pr.relay_noise)

    def info_split(self, alpha, e):
        """Second-subphase powers left by first-subphase powers e."""
        if alpha >= 1:
            return np.zeros(self.K)
        return np.maximum((self.P - alpha * e) / (1 - alpha), 0.0)

    def omega_range(self, alpha: float, theta: float) -> tuple[float, float]:
        """Relay gains worth searching at (alpha, theta).

        Below the lower end the relay budget cannot bind even with every
        watt spent on information; above the upper end it is exceeded even
        when every watt goes to energy symbols.
        """
        pr = self.params
        lo_load = self.relay_load(alpha, theta, np.zeros(self.K), self.info_split(alpha, np.zeros(self.K)))
        lo_load = max(lo_load, self.relay_load(alpha, theta, self.energy_limit(alpha), np.zeros(self.K)))
        e = self.energy_limit(alpha)
        hi_load = self.relay_load(alpha, theta, np.zeros(self.K), self.info_split(alpha, e))
        return pr.relay_power / lo_load, pr.relay_power / hi_load


class _RateCuts:
    """Convex family R(S) - min_k R_{k,S}(p) <= 0 over every proper subset S.

    Variable layout: [p_E, p_1, p_2, R, (t)], each block of length K.
    """

    def __init__(self, inst: _Instance, alpha, theta, omega, n):
        self.inst = inst
        self.alpha = alpha
        self.c1, self.c2 = _coefficients(alpha, theta, omega, inst.g, inst.params)
        self.size = inst.masks.size
        self.n = n
        self._key = None

    def _table(self, x):
        key = x.tobytes()
        if key == self._key:
            return self._val
        inst = self.inst
        K, g = inst.K, inst.g
        a = self.alpha
        F = np.zeros((K, inst.masks.size))
        if a > 0:
            F += a * capacity(self.c1[:, None] * (inst.member @ (g * x[K:2 * K])))
        if a < 1:
            F += (1 - a) * capacity(self.c2[:, None] * (inst.member @ (g * x[2 * K:3 * K])))
        F[~inst.outside] = np.inf
        self._key = key
        self._val = F.min(axis=0)
        return self._val

    def values(self, x):
        f = self._table(x)
        K = self.inst.K
        return self.inst.member @ x[3 * K:4 * K] - f

    def _local(self, x, idx):
        inst = self.inst
        K, g = inst.K, inst.g
        M = inst.member[idx]
        A = M @ (g * x[K:2 * K])
        B = M @ (g * x[2 * K:3 * K])
        F = np.zeros((K, idx.size))
        a = self.alpha
        if a > 0:
            F += a * capacity(self.c1[:, None] * A)
        if a < 1:
            F += (1 - a) * capacity(self.c2[:, None] * B)
        F[~inst.outside[:, idx]] = np.inf
        k = np.argmin(F, axis=0)
        return F[k, np.arange(idx.size)], k, A, B, M

    def values_at(self, x, idx):
        """values(x)[idx] without evaluating the other members."""
        K = self.inst.K
        f, _, _, _, M = self._local(x, np.asarray(idx))
        return M @ x[3 * K:4 * K] - f

    def gradients(self, x, idx):
        idx = np.asarray(idx)
        _, kk, A, B, M = self._local(x, idx)
        K, g = self.inst.K, self.inst.g
        a = self.alpha
        out = np.zeros((idx.size, self.n))
        if a > 0:
            d1 = a * 0.5 / LN2 * self.c1[kk] / (1 + self.c1[kk] * A)
            out[:, K:2 * K] = -d1[:, None] * g * M
        if a < 1:
            d2 = (1 - a) * 0.5 / LN2 * self.c2[kk] / (1 + self.c2[kk] * B)
            out[:, 2 * K:3 * K] = -d2[:, None] * g * M
        out[:, 3 * K:4 * K] = M
        return out


class _HarvestCut:
    """scale * (f(p_E) + g.p_1) >= 1 (target mode) or t <= scale * (...)
    (objective mode), f(p) = (sum_k |h_k| sqrt(p_k))^2 being concave.

    Cuts use f(p) = min over lambda in the simplex of sum_k |h_k|^2 p_k /
    lambda_k; lambda is floored away from zero so that every cut stays
    finite, which keeps it valid (any lambda gives an overestimate of f).
    """

    size = 1

    def __init__(self, inst: _Instance, scale: float, n: int, epigraph: bool):
        self.inst = inst
        self.scale = scale
        self.n = n
        self.epigraph = epigraph

    def collected(self, x) -> float:
        K = self.inst.K
        pe = np.maximum(x[:K], 0.0)
        return float(np.sqrt(pe) @ self.inst.h) ** 2 + float(x[K:2 * K] @ self.inst.g)

    def values(self, x):
        v = self.scale * self.collected(x)
        return np.array([x[-1] - v if self.epigraph else 1.0 - v])

    def gradients(self, x, idx):
        inst = self.inst
        K = inst.K
        pe = np.maximum(x[:K], 0.0)
        w = inst.h * np.sqrt(pe)
        w = np.maximum(w, 1e-3 * max(float(w.sum()), 1e-300) / K)
        lam = w / w.sum()
        row = np.zeros(self.n)
        row[:K] = -self.scale * inst.g / lam
        row[K:2 * K] = -self.scale * inst.g
        if self.epigraph:
            row[-1] = 1.0
        return row[None, :]


@dataclass
class _InnerResult:
    value: float
    x: np.ndarray
    report: SolverReport
    alpha: float
    theta: float
    omega: float

    def allocation(self, K) -> Allocation:
        x = np.maximum(self.x, 0.0)
        return Allocation(self.alpha, self.theta, self.omega, x[:K], x[K:2 * K], x[2 * K:3 * K])


def _inner_solve(inst: _Instance, alpha: float, theta: float, omega: float,
                 mode: str, target: float, cfg: SearchConfig, seeds=()) -> _InnerResult | None:
    """Solve the convex problem at fixed (alpha, theta, omega).

    mode "rate": maximize sum R subject to harvest >= target (watts).
    mode "harvest": maximize harvested power subject to sum R >= target.
    Returns None when the fixed triple admits no feasible point.
    """
    pr = inst.params
    K, g, P = inst.K, inst.g, inst.P
    eta = pr.efficiency
    e_max = inst.energy_limit(alpha)
    # the all-energy point maximizes harvest and minimizes relay load at once
    p2_h = inst.info_split(alpha, e_max)
    if omega * inst.relay_load(alpha, theta, np.zeros(K), p2_h) > pr.relay_power * (1 + 1e-12):
        return None
    harvest_max = alpha * theta * eta * float(inst.h @ np.sqrt(e_max)) ** 2
    epigraph = mode == "harvest"
    n = 4 * K + (1 if epigraph else 0)
    if mode == "rate" and harvest_max < target * (1 - 1e-12):
        return None
    if epigraph and harvest_max <= 0:
        return None

    rows = []
    for k in range(K):
        r = np.zeros(n)
        r[k] = r[K + k] = alpha
        r[2 * K + k] = 1 - alpha
        rows.append((r, "=", P[k]))
        r = np.zeros(n)
        r[k] = r[K + k] = 1.0
        rows.append((r, "<=", pr.peak_power))
    r = np.zeros(n)
    r[K:2 * K] = omega * alpha * (1 - theta) * g
    r[2 * K:3 * K] = omega * (1 - alpha) * g
    noise = alpha * pr.first_subphase_noise(theta) + (1 - alpha) * pr.relay_noise
    rows.append((r, "<=", pr.relay_power - omega * noise))

    rates = _RateCuts(inst, alpha, theta, omega, n)
    # per-user rate caps: the singleton bound at the largest powers, seen by
    # the weakest other receiver (rows: receiver j, columns: user k)
    single = np.zeros((K, K))
    if alpha > 0:
        single += alpha * capacity(np.outer(rates.c1, g) * pr.peak_power)
    if alpha < 1:
        single += (1 - alpha) * capacity(np.outer(rates.c2, g * P) / (1 - alpha))
    np.fill_diagonal(single, np.inf)
    rmax = single.min(axis=0) * 1.01 + 1e-9
    p1_hi = pr.peak_power if (theta < 1 and alpha > 0) else 0.0
    pe_hi = pr.peak_power if alpha > 0 else 0.0
    p2_hi = float(np.max(P)) / (1 - alpha) if alpha < 1 else 0.0
    bounds = [(0.0, pe_hi)] * K + [(0.0, p1_hi)] * K + [(0.0, p2_hi)] * K + \
        [(0.0, float(v)) for v in rmax]
    c = np.zeros(n)
    families = [rates]
    if epigraph:
        ref = eta * float(np.max(P)) * float(inst.h.sum()) ** 2
        harvest = _HarvestCut(inst, alpha * theta * eta / ref, n, True)
        bounds.append((0.0, 2.0 * harvest_max / ref + 1e-12))
        c[-1] = 1.0
        if target > 0:
            r = np.zeros(n)
            r[3 * K:4 * K] = 1.0
            rows.append((r, ">=", target))
        families.append(harvest)
    else:
        c[3 * K:4 * K] = 1.0
        if target > 0:
            families.append(_HarvestCut(inst, alpha * theta * eta / target, n, False))
    lp = LinearProgram.from_rows(c, rows, bounds)

    x0 = _interior_point(inst, alpha, theta, omega, mode, target, harvest_max, rates, n)
    if x0 is None and epigraph:
        return None
    points = [_with_region_rates(inst, alpha, theta, omega, x, n)
              for x in ([] if x0 is None else [x0]) + list(seeds)]
    rep = solve_concave_program(lp, families, tol=cfg.tol, max_cuts=cfg.max_cuts,
                                method=cfg.lp_method, cuts_per_round=16,
                                interior_point=x0, initial_points=points,
                                gap_tol=cfg.gap_tol)
    if rep.status == INFEASIBLE or not np.all(np.isfinite(rep.solution)):
        return None
    value = rep.objective_value
    if epigraph:
        value = alpha * theta * eta * harvest.collected(rep.solution)
    return _InnerResult(value, rep.solution, rep, alpha, theta, omega)


def _with_region_rates(inst, alpha, theta, omega, x, n):
    """Powers of x with the best rates they support at (alpha, theta, omega).

    Used only to place the first linearizations, where the subset bounds
    that limit those powers are tight.
    """
    K = inst.K
    x = np.maximum(np.asarray(x, dtype=float)[:n], 0.0)
    alloc = Allocation(alpha, theta, omega, x[:K], x[K:2 * K], x[2 * K:3 * K])
    out = np.zeros(n)
    out[:3 * K] = x[:3 * K]
    out[3 * K:4 * K] = max_sum_rate(alloc, inst.ch, inst.params).rates
    return out


def _interior_point(inst, alpha, theta, omega, mode, target, harvest_max, rates, n):
    """A point meeting the linear rows and every convex constraint.

    Energy symbols are a fraction tau of the all-energy point. In rate mode
    tau sits halfway between the harvest target and full energy (raised
    until the relay budget holds). In harvest mode a few fractions above
    the smallest one the relay budget allows are tried, with rates from the
    region LP shrunk slightly; None if none of them reaches the sum-rate
    target.
    """
    pr = inst.params
    K = inst.K
    e_max = inst.energy_limit(alpha)
    # with no second subphase the budget must be spent in the first one
    spill = alpha >= 1 and theta < 1

    def split(tau):
        pe = e_max * tau
        p1 = e_max - pe if spill else np.zeros(K)
        return pe, p1, inst.info_split(alpha, pe)

    def fits(tau):
        pe, p1, p2 = split(tau)
        return omega * inst.relay_load(alpha, theta, p1, p2) <= pr.relay_power

    if alpha >= 1 and not spill:
        fractions = [1.0]
    elif mode == "rate":
        frac = target / harvest_max if harvest_max > 0 else 1.0
        tau = 0.5 * (1.0 + frac)
        for _ in range(60):
            if fits(tau):
                break
            tau = 0.5 * (1.0 + tau)
        else:
            tau = 1.0
        fractions = [tau]
    else:
        lo, hi = 0.0, 1.0
        if not fits(lo):
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if fits(mid):
                    hi = mid
                else:
                    lo = mid
        fractions = [hi + f * (1.0 - hi) for f in (0.5, 0.2, 0.05, 0.01)]
    x0 = np.zeros(n)
    for tau in fractions:
        pe, p1, p2 = split(tau)
        x0[:K] = pe
        x0[K:2 * K] = p1
        x0[2 * K:3 * K] = p2
        if mode == "rate":
            return x0
        alloc = Allocation(alpha, theta, omega, pe, p1, p2)
        R = max_sum_rate(alloc, inst.ch, pr).rates * (1 - 1e-6)
        if R.sum() >= target:
            x0[3 * K:4 * K] = R
            x0[-1] = 0.0
            return x0
    return None


# --------------------------------------------------------------------------
# outer search over (alpha, theta, omega)
# --------------------------------------------------------------------------

HYSTERESIS = 1e-9
# a start on the other side of the peak-power knee is refined when it is
# within this relative distance of the best start
RIVAL_MARGIN = 0.03


def _better(value, alpha, theta, best) -> bool:
    """Incumbent test with hysteresis; ties go to smaller alpha, then theta."""
    if best is None:
        return True
    if value > best.value + HYSTERESIS:
        return True
    if value < best.value - HYSTERESIS:
        return False
    return (alpha, theta) < (best.alpha, best.theta)


class _Landscape:
    """Inner optimum as a function of z = (v, u, s) in the unit cube.

    theta = 1 - v (1 - theta_lo); alpha runs from the smallest split that
    can still meet the harvest target (log scale) or, without a harvest
    target, piecewise linearly with the peak-power knee at the middle;
    omega = omega_lo (omega_hi / omega_lo)^s over the gains worth searching.
    """

    def __init__(self, inst: _Instance, mode: str, target: float, cfg: SearchConfig):
        self.inst = inst
        self.mode = mode
        self.target = target
        self.cfg = cfg
        self.cache: dict = {}
        self.best: _InnerResult | None = None
        self.evaluations = 0
        self.trace: list = []
        pr = inst.params
        self.knee = pr.max_energy_fraction
        self.harvest_limited = mode == "rate" and target > 0
        if self.harvest_limited:
            top = self.harvest_max(1.0, 1.0)
            self.theta_lo = min(1.0, target / top) if top > 0 else 1.0
        else:
            self.theta_lo = 0.0

    def harvest_max(self, alpha, theta) -> float:
        e = self.inst.energy_limit(alpha)
        return alpha * theta * self.inst.params.efficiency * float(self.inst.h @ np.sqrt(e)) ** 2

    def alpha_floor(self, theta) -> float:
        """Smallest alpha with harvest_max(alpha, theta) >= target."""
        if not self.harvest_limited:
            return 0.0
        if self.harvest_max(1.0, theta) < self.target:
            return 1.0
        lo, hi = 0.0, 1.0
        # harvest_max grows with alpha, linearly below the peak-power knee
        knee = self.inst.params.max_energy_fraction
        if knee > 0 and self.harvest_max(knee, theta) >= self.target:
            return self.target / self.harvest_max(knee, theta) * knee
        lo = knee
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if self.harvest_max(mid, theta) >= self.target:
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-15:
                break
        return hi

    def triple(self, z):
        v, u, s = z
        theta = 1.0 - v * (1.0 - self.theta_lo)
        a0 = self.alpha_floor(theta)
        if self.harvest_limited and a0 > 0:
            alpha = a0 * (1.0 / a0) ** u
        else:
            # piecewise linear with the peak-power knee at u = 1/2
            knee = self.knee
            alpha = 2.0 * u * knee if u <= 0.5 else knee + (2.0 * u - 1.0) * (1.0 - knee)
        alpha = min(max(alpha, a0), 1.0)
        w_lo, w_hi = self.inst.omega_range(alpha, theta)
        omega = w_lo * (w_hi / w_lo) ** s if w_hi > w_lo else w_lo
        return alpha, theta, omega

    def coords(self, alpha, theta, omega):
        """Inverse of ``triple`` (clipped to the cube)."""
        v = 0.0 if self.theta_lo >= 1 else (1.0 - theta) / (1.0 - self.theta_lo)
        a0 = self.alpha_floor(theta)
        if self.harvest_limited and 0 < a0 < 1:
            u = math.log(max(alpha, a0) / a0) / math.log(1.0 / a0)
        elif alpha <= self.knee:
            u = 0.5 * alpha / self.knee if self.knee > 0 else 0.5
        else:
            u = 0.5 + 0.5 * (alpha - self.knee) / (1.0 - self.knee) if self.knee < 1 else 1.0
        w_lo, w_hi = self.inst.omega_range(alpha, theta)
        s = math.log(omega / w_lo) / math.log(w_hi / w_lo) if w_hi > w_lo else 0.0
        return tuple(float(min(max(c, 0.0), 1.0)) for c in (v, u, s))

    def __call__(self, z) -> float:
        z = tuple(round(float(min(max(c, 0.0), 1.0)), 12) for c in z)
        if z in self.cache:
            return self.cache[z]
        alpha, theta, omega = self.triple(z)
        value = self.solve(alpha, theta, omega)
        self.cache[z] = value
        return value

    def solve(self, alpha, theta, omega) -> float:
        if self.evaluations >= self.cfg.max_evaluations:
            return -math.inf
        self.evaluations += 1
        seeds = () if self.best is None else (self.best.x,)
        res = _inner_solve(self.inst, alpha, theta, omega, self.mode, self.target, self.cfg, seeds)
        value = -math.inf if res is None else res.value
        self.trace.append((alpha, theta, omega, value))
        if res is not None and _better(value, alpha, theta, self.best):
            self.best = res
        return value


def _centers(points: int) -> np.ndarray:
    """Cell centres of a uniform partition of [0, 1]."""
    return (np.arange(max(points, 1)) + 0.5) / max(points, 1)


def _compass(f, z0, f0, step, min_step, grow=2.0):
    """Opportunistic coordinate pattern search on the unit cube.

    Polls +-step along each axis, moves to the first improving point and
    repeats the successful direction with a growing step; halves the step
    when no poll improves. Stops once the step drops below ``min_step``.
    """
    z, fz = np.array(z0, dtype=float), f0
    dims = z.size
    while step >= min_step:
        moved = False
        for d in range(dims):
            for sign in (1.0, -1.0):
                trial = z.copy()
                trial[d] = min(max(trial[d] + sign * step, 0.0), 1.0)
                if trial[d] == z[d]:
                    continue
                ft = f(trial)
                if ft > fz + HYSTERESIS:
                    z, fz, moved = trial, ft, True
                    # keep going while the direction pays off
                    jump = step * grow
                    while True:
                        nxt = z.copy()
                        nxt[d] = min(max(nxt[d] + sign * jump, 0.0), 1.0)
                        if nxt[d] == z[d]:
                            break
                        fn = f(nxt)
                        if fn <= fz + HYSTERESIS:
                            break
                        z, fz = nxt, fn
                        jump *= grow
                    break
        if not moved:
            step *= 0.5
    return z, fz


def _outer_search(inst: _Instance, mode: str, target: float, cfg: SearchConfig,
                  seeds=()) -> _Landscape:
    """Coarse design over the cube, then pattern search.

    ``seeds`` are (alpha, theta, omega) triples evaluated first (the
    closed-form suboptimal designs), so the search never ends below them.
    The landscape has separate basins on either side of the split where
    energy symbols stop being peak limited, so the pattern search is run
    from the best start of each side when that start is competitive.
    """
    land = _Landscape(inst, mode, target, cfg)
    knee = inst.params.max_energy_fraction
    starts = []
    for alpha, theta, omega in seeds:
        value = land.solve(alpha, theta, omega)
        starts.append((value, land.coords(alpha, theta, omega), alpha))
    for v in _centers(cfg.theta_points):
        for u in _centers(cfg.alpha_points):
            for s in _centers(cfg.omega_points):
                z = (v, u, s)
                starts.append((land(z), z, land.triple(z)[0]))
    finite = [t for t in starts if math.isfinite(t[0])]
    if not finite:
        return land
    finite.sort(key=lambda t: -t[0])
    best = finite[0]
    runs = [best]
    other = [t for t in finite if (t[2] <= knee) != (best[2] <= knee)]
    if other and other[0][0] >= best[0] - RIVAL_MARGIN * max(1.0, abs(best[0])):
        runs.append(other[0])
    step = 0.5 / max(cfg.alpha_points, cfg.theta_points, cfg.omega_points, 1)
    for value, z, _ in runs:
        _compass(land, z, value, step, cfg.search_tol)
    return land


# --------------------------------------------------------------------------
# P1 / P3: optimal designs
# --------------------------------------------------------------------------

def _check_size(params: SystemParams):
    if params.num_users > CONVEX_MAX_USERS:
        raise ValueError(f"the joint design enumerates every subset; K <= {CONVEX_MAX_USERS} "
                         f"supported, got K = {params.num_users}")


def _polish(inst: _Instance, res: _InnerResult) -> Allocation:
    """Clip round-off from the solver point and keep the relay budget exact
    by lowering omega if the load overshoots."""
    alloc = res.allocation(inst.K)
    load = inst.relay_load(alloc.alpha, alloc.theta, alloc.info_powers_1, alloc.info_powers_2)
    if alloc.omega * load > inst.params.relay_power:
        alloc = replace(alloc, relay_gain=inst.params.relay_power / load)
    return alloc


def _search_summary(land: _Landscape) -> dict:
    return {"evaluations": land.evaluations,
            "trace": [tuple(float(v) for v in t) for t in land.trace]}


def max_harvest(params: SystemParams, ch: ChannelState) -> float:
    """Largest harvest of any design: alpha = theta = 1, p_E = min(P_peak, P_k)."""
    e = np.minimum(params.peak_power, params.powers)
    return params.efficiency * float(ch.magnitudes @ np.sqrt(e)) ** 2


def solve_p1_sum_rate(params: SystemParams, ch: ChannelState, targets: Targets,
                      search_cfg: SearchConfig | None = None) -> Solution:
    """Sum-rate maximization at a harvest target over every design variable.

    The outer search over (alpha, theta, omega) starts from the closed-form
    suboptimal design, and that design is returned whenever the search
    fails to beat it.
    """
    _check_size(params)
    cfg = search_cfg or SearchConfig()
    K = params.num_users
    target = targets.target_harvest
    top = max_harvest(params, ch)
    if target > top * (1 + 1e-12):
        return Solution.infeasible(K, top, reason="harvest target above the all-energy harvest")
    sub = solve_p2_suboptimal(params, ch, targets, cfg.lp_method)
    inst = _Instance(params, ch)
    seeds = [(sub.alloc.alpha, 1.0, sub.alloc.omega)] if sub.feasible else []
    land = _outer_search(inst, "rate", target, cfg, seeds)
    summary = _search_summary(land)
    best = None
    if land.best is not None:
        best = _finish(params, ch, _polish(inst, land.best), cfg.lp_method,
                       search=summary, inner_value=land.best.value)
        best.diagnostics["harvest_shortfall"] = max(0.0, 1.0 - best.harvested / target) if target > 0 else 0.0
    if sub.feasible and (best is None or sub.sum_rate >= best.sum_rate):
        sub.diagnostics.update(search=summary, fallback="suboptimal design")
        sub.diagnostics["harvest_shortfall"] = 0.0
        return sub
    if best is None:
        return Solution.infeasible(K, top, reason="no feasible design found", search=summary)
    return best


def solve_p3_harvest(params: SystemParams, ch: ChannelState, targets: Targets,
                     search_cfg: SearchConfig | None = None) -> Solution:
    """Harvest maximization at a sum-rate target over every design variable."""
    _check_size(params)
    cfg = search_cfg or SearchConfig()
    K = params.num_users
    target = targets.target_sum_rate
    sub = solve_p4_suboptimal(params, ch, targets, cfg.lp_method)
    inst = _Instance(params, ch)
    seeds = []
    if sub.feasible:
        seeds.append((sub.alloc.alpha, 1.0, sub.alloc.omega))
    knee = params.max_energy_fraction
    if 0 < knee < 1 and p4_sum_rate(params, ch, knee, cfg.lp_method) > 0:
        seeds.append((knee, 1.0, p2_allocation(params, ch, knee).omega))
    if target == 0:
        # every watt on energy symbols over the whole phase
        seeds.append((1.0, 1.0, inst.omega_range(1.0, 1.0)[0]))
    land = _outer_search(inst, "harvest", target, cfg, seeds)
    summary = _search_summary(land)
    best = None
    if land.best is not None:
        best = _finish(params, ch, _polish(inst, land.best), cfg.lp_method,
                       search=summary, inner_value=land.best.value)
        best.diagnostics["rate_shortfall"] = max(0.0, target - best.sum_rate)
    if sub.feasible and (best is None or sub.harvested >= best.harvested):
        sub.diagnostics.update(search=summary, fallback="suboptimal design")
        return sub
    if best is None:
        return Solution.infeasible(K, 0.0, reason="sum-rate target out of reach", search=summary)
    return best


# --------------------------------------------------------------------------
# P4: suboptimal harvest design
# --------------------------------------------------------------------------

def p4_sum_rate(params: SystemParams, ch: ChannelState, alpha: float,
                lp_method: str = "simplex") -> float:
    """Sum rate of the closed-form design at time split alpha."""
    if alpha >= 1:
        return 0.0
    return max_sum_rate(p2_allocation(params, ch, alpha), ch, params, method=lp_method).sum_rate


def solve_p4_suboptimal(params: SystemParams, ch: ChannelState, targets: Targets,
                        lp_method: str = "simplex", tol: float = 1e-10) -> Solution:
    """Longest peak-power energy subphase that still meets the sum-rate target.

    The harvest of the closed-form design grows with alpha, so the answer
    is the largest alpha whose sum rate reaches the target, located by
    bisection on that indicator.
    """
    from .solvers import largest_true

    K = params.num_users
    target = targets.target_sum_rate
    a_max = params.max_energy_fraction
    ok = lambda a: p4_sum_rate(params, ch, a, lp_method) >= target
    alpha = largest_true(ok, 0.0, a_max, tol=tol)
    if alpha is None:
        return Solution.infeasible(K, 0.0, reason="sum-rate target out of reach even without harvesting")
    return _finish(params, ch, p2_allocation(params, ch, alpha), lp_method, time_split=alpha)


# --------------------------------------------------------------------------
# conventional power-splitting baseline
# --------------------------------------------------------------------------

def baseline_allocation(params: SystemParams, ch: ChannelState, theta: float) -> Allocation:
    """No energy symbols, one subphase carrying all information at full
    power; the relay splits theta of it to the harvester and spends its
    whole budget on the rest."""
    K = params.num_users
    p1 = params.powers.copy()
    load = (1 - theta) * float(ch.power_gains @ p1) + params.first_subphase_noise(theta)
    return Allocation(1.0, theta, params.relay_power / load, np.zeros(K), p1, np.zeros(K))


def solve_baseline_swipt(params: SystemParams, ch: ChannelState, targets: Targets,
                         mode: str = "sum-rate", lp_method: str = "simplex",
                         tol: float = 1e-10) -> Solution:
    """Conventional SWIPT: power splitting of the information signal only.

    sum-rate mode uses the smallest split meeting the harvest target;
    harvest mode the largest split whose sum rate meets the rate target.
    """
    from .solvers import largest_true

    K = params.num_users
    collected = params.efficiency * float(ch.power_gains @ params.powers)
    if mode == "sum-rate":
        target = targets.target_harvest
        theta = target / collected if collected > 0 else (0.0 if target == 0 else math.inf)
        if theta > 1 + 1e-12:
            return Solution.infeasible(K, collected, reason="harvest target above the full-split harvest")
        theta = min(theta, 1.0)
    elif mode == "harvest":
        target = targets.target_sum_rate
        rate = lambda t: max_sum_rate(baseline_allocation(params, ch, t), ch, params,
                                      method=lp_method).sum_rate
        theta = largest_true(lambda t: rate(t) >= target, 0.0, 1.0, tol=tol)
        if theta is None:
            return Solution.infeasible(K, 0.0, reason="sum-rate target out of reach")
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return _finish(params, ch, baseline_allocation(params, ch, theta), lp_method, power_split=theta)
