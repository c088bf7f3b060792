"""Cutting planes for linear objectives under convex constraints.

The outer approximation is an LP refined with tangent (Kelley) cuts. When a
strictly feasible point is known, cuts are taken where the segment from that
point to the LP iterate leaves the feasible set (supporting hyperplanes),
which also yields a feasible incumbent and a duality-free optimality gap.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .lp import (INFEASIBLE, ITERATION_LIMIT, LE, OPTIMAL, LinearProgram,
                 LPSession, SolverReport, solve_lp)


class ConvexConstraint:
    """A single convex constraint g(x) <= 0 with a subgradient oracle."""

    size = 1

    def __init__(self, value: Callable[[np.ndarray], float],
                 subgradient: Callable[[np.ndarray], np.ndarray], name: str = ""):
        self.value = value
        self.subgradient = subgradient
        self.name = name

    def values(self, x):
        return np.array([self.value(x)], dtype=float)

    def gradients(self, x, idx):
        return np.asarray(self.subgradient(x), dtype=float)[None, :]


SEED_BAND = 1e-2


def _max_violation(constraints, x) -> float:
    worst = -math.inf
    for fam in constraints:
        v = fam.values(x)
        if v.size:
            worst = max(worst, float(np.max(v)))
    return worst


class _CutPool:
    def __init__(self, n):
        self.n = n
        self.rows: list[np.ndarray] = []
        self.rhs: list[float] = []
        self.flushed = 0

    def __len__(self):
        return len(self.rows)

    def add(self, fam, x, idx, separate=None) -> int:
        """Linearize members ``idx`` of ``fam`` at x; returns cuts added.

        With ``separate`` given, only cuts that cut that point off are kept.
        """
        if len(idx) == 0:
            return 0
        g = fam.values(x)[idx]
        G = np.atleast_2d(fam.gradients(x, idx))
        added = 0
        for row, gi in zip(G, g):
            if not (np.all(np.isfinite(row)) and np.isfinite(gi)):
                continue
            rhs = float(row @ x - gi)
            if separate is not None and row @ separate - rhs <= 0.0:
                continue
            self.rows.append(row)
            self.rhs.append(rhs)
            added += 1
        return added

    def flush(self, session: LPSession):
        """Hand rows added since the last flush to a warm-started session."""
        if self.flushed < len(self.rows):
            session.add_rows(np.array(self.rows[self.flushed:]), self.rhs[self.flushed:])
            self.flushed = len(self.rows)

    def program(self, lp: LinearProgram) -> LinearProgram:
        if not self.rows:
            return lp
        return LinearProgram(lp.objective, np.vstack([lp.A, np.array(self.rows)]),
                             list(lp.relations) + [LE] * len(self.rows),
                             np.concatenate([lp.b, self.rhs]), lp.bounds)


def _worst_members(vals, tol, limit):
    bad = np.flatnonzero(vals > tol)
    if bad.size > limit:
        bad = bad[np.argsort(-vals[bad], kind="stable")[:limit]]
    return bad


def find_interior_point(lp: LinearProgram, constraints: Sequence, tol: float = 1e-7,
                        max_cuts: int = 500, method: str = "simplex",
                        lp_tol: float = 1e-9) -> tuple[np.ndarray | None, SolverReport]:
    """Phase 1: look for x satisfying the LP rows with every g_i(x) < 0.

    Minimizes a common slack s >= -1 over g_i(x) <= s by Kelley cuts and
    stops at the first strictly feasible iterate. Returns (None, report) with
    status ``infeasible`` when the relaxation proves min s > 0.
    """
    n = lp.num_vars
    obj = np.zeros(n + 1)
    obj[-1] = -1.0
    A = np.hstack([lp.A, np.zeros((lp.A.shape[0], 1))])
    aug = LinearProgram(obj, A, lp.relations, lp.b, list(lp.bounds) + [(-1.0, math.inf)])
    rows: list[np.ndarray] = []
    rhs: list[float] = []
    rounds = 0
    while True:
        prog = aug
        if rows:
            prog = LinearProgram(obj, np.vstack([A, np.array(rows)]),
                                 list(lp.relations) + [LE] * len(rows),
                                 np.concatenate([lp.b, rhs]), aug.bounds)
        rep = solve_lp(prog, lp_tol, method)
        rounds += 1
        if rep.status != OPTIMAL:
            return None, rep
        x = rep.solution[:n]
        s = rep.solution[n]
        worst = _max_violation(constraints, x)
        if worst < 0.0:
            return x, SolverReport(OPTIMAL, worst, x, lp.violation(x), rounds)
        if worst - s <= tol and s > tol:
            return None, SolverReport(INFEASIBLE, s, x, worst, rounds)
        if len(rows) >= max_cuts:
            return None, SolverReport(ITERATION_LIMIT, s, x, worst, rounds)
        for fam in constraints:
            vals = fam.values(x)
            idx = _worst_members(vals - s, 0.0, 64)
            if idx.size == 0:
                continue
            G = np.atleast_2d(fam.gradients(x, idx))
            for row, gi in zip(G, vals[idx]):
                if np.all(np.isfinite(row)) and np.isfinite(gi):
                    rows.append(np.append(row, -1.0))
                    rhs.append(float(row @ x - gi))


def _member_values(fam, x, idx):
    if idx is None:
        return fam.values(x)
    at = getattr(fam, "values_at", None)
    return at(x, idx) if at is not None else fam.values(x)[idx]


def _phi(constraints, x, d=None, active=None):
    """max_i g_i(x) and, with a direction d, its slope along d.

    ``active`` optionally restricts each family to a subset of members.
    """
    worst, arg = -math.inf, None
    for j, fam in enumerate(constraints):
        idx = None if active is None else active[j]
        if idx is not None and idx.size == 0:
            continue
        v = _member_values(fam, x, idx)
        if v.size:
            i = int(np.argmax(v))
            if v[i] > worst:
                worst, arg = float(v[i]), (fam, i if idx is None else int(idx[i]))
    if d is None or arg is None:
        return worst, math.nan
    row = np.atleast_2d(arg[0].gradients(x, np.array([arg[1]])))[0]
    return worst, float(row @ d)


def _boundary(constraints, x0, x1, tol=1e-12, max_iter=100, step_tol=None, active=None):
    """Bracket the exit point of the segment x0 -> x1 from the feasible set.

    phi(t) = max_i g_i(x0 + t d) is convex with phi(0) <= 0 < phi(1); secant
    steps land on the feasible side and Newton steps from the right on the
    infeasible side, so the bracket [lo, hi] shrinks from both ends.
    Stops once phi(lo) > -tol or the bracket is shorter than ``step_tol``
    (default ``tol``). Returns the points at lo (feasible) and hi.
    """
    step_tol = tol if step_tol is None else max(step_tol, tol)
    phi = lambda x, d=None: _phi(constraints, x, d, active)
    d = x1 - x0
    lo, flo = 0.0, phi(x0)[0]
    hi, (fhi, dhi) = 1.0, phi(x1, d)
    for _ in range(max_iter):
        if hi - lo <= step_tol:
            break
        t = lo - flo * (hi - lo) / (fhi - flo) if fhi > flo else 0.5 * (lo + hi)
        if not lo < t < hi:
            t = 0.5 * (lo + hi)
        ft, dt = phi(x0 + t * d, d)
        if ft <= 0.0:
            lo, flo = t, ft
        else:
            hi, fhi, dhi = t, ft, dt
        if dhi > 0.0 and math.isfinite(dhi):
            t = hi - fhi / dhi
            if lo < t < hi:
                ft, dt = phi(x0 + t * d, d)
                if ft <= 0.0:
                    lo, flo = t, ft
                else:
                    hi, fhi, dhi = t, ft, dt
        if flo > -tol and lo > 0.0:
            break
    return x0 + lo * d, x0 + hi * d


def solve_concave_program(lp: LinearProgram, constraints: Sequence = (),
                          tol: float = 1e-7, max_cuts: int = 500,
                          method: str = "simplex", cuts_per_round: int = 64,
                          interior_point: np.ndarray | None = None,
                          initial_points: Sequence[np.ndarray] = (),
                          gap_tol: float | None = None,
                          lp_tol: float = 1e-9) -> SolverReport:
    """Maximize ``lp``'s objective subject to its rows and convex constraints.

    Each element of ``constraints`` is a family exposing ``values(x)`` (array
    of g_i(x)) and ``gradients(x, idx)`` (subgradient rows for the chosen
    members); ``ConvexConstraint`` wraps a single function. Variables must be
    bounded or the first relaxations may be unbounded.

    The loop stops when the LP iterate violates no g_i by more than ``tol``
    (that iterate is returned) or when the feasible incumbent is within
    ``gap_tol`` (relative, default ``tol``) of the LP bound (the incumbent is
    returned, feasible exactly). ``interior_point`` must satisfy the LP rows
    and g_i <= tol; when omitted a phase-1 search supplies one.
    """
    if not constraints:
        return solve_lp(lp, lp_tol, method)
    gap_tol = tol if gap_tol is None else gap_tol
    n = lp.num_vars
    info: dict = {"rounds": 0, "cuts": 0, "lp_iterations": 0}

    if interior_point is None:
        interior_point, rep1 = find_interior_point(lp, constraints, tol, max_cuts, method, lp_tol)
        info["phase1_rounds"] = rep1.iterations
        if interior_point is None:
            return SolverReport(rep1.status, math.nan, np.full(n, np.nan),
                                rep1.max_constraint_violation, rep1.iterations, info)
    x0 = np.asarray(interior_point, dtype=float)
    if _max_violation(constraints, x0) > tol or lp.violation(x0) > max(tol, 1e-9):
        raise ValueError("interior_point violates the constraints")

    pool = _CutPool(n)
    for xs in initial_points:
        xs = np.asarray(xs, dtype=float)
        if not np.all(np.isfinite(xs)):
            continue
        for fam in constraints:
            vals = fam.values(xs)
            # the members closest to binding at the seed
            pool.add(fam, xs, _worst_members(vals, -SEED_BAND * max(1.0, float(np.max(np.abs(vals)))), cuts_per_round))

    session = None
    if method in ("simplex", "dual") and lp.is_bounded:
        session = LPSession(lp, lp_tol)
    best_x = x0
    best_obj = float(lp.objective @ x0)
    upper = math.inf
    x = x0
    while True:
        if session is not None:
            pool.flush(session)
            rep = session.solve()
        else:
            rep = solve_lp(pool.program(lp), lp_tol, method)
        info["rounds"] += 1
        info["lp_iterations"] += rep.iterations
        info["cuts"] = len(pool)
        if rep.status != OPTIMAL:
            # an empty relaxation would contradict the interior point, so this
            # is a numerical failure of the LP engine; keep the incumbent
            info["lp_status"] = rep.status
            return SolverReport(rep.status, best_obj, best_x,
                                max(0.0, lp.violation(best_x)), info["rounds"], info)
        x = rep.solution
        upper = min(upper, rep.objective_value)
        if "duals" in rep.info:
            del rep.info["duals"]
        scale = max(1.0, abs(upper) if math.isfinite(upper) else abs(rep.objective_value))
        per_family = [fam.values(x) for fam in constraints]
        worst = max(float(np.max(v)) if v.size else -math.inf for v in per_family)
        info["upper_bound"] = upper
        if worst <= tol:
            info["gap"] = 0.0
            viol = max(worst, lp.violation(x), 0.0)
            return SolverReport(OPTIMAL, rep.objective_value, x, viol, info["rounds"], info)
        # the bracket only needs to pin the objective well inside gap_tol
        slope = abs(float(lp.objective @ (x - x0)))
        step = 0.5 * gap_tol * scale / slope if slope > 0 else 1e-12
        # members satisfied at both ends hold along the whole segment
        active = [np.flatnonzero(v > 0.0) for v in per_family]
        xb, xout = _boundary(constraints, x0, x, step_tol=step, active=active)
        ob = float(lp.objective @ xb)
        if ob > best_obj:
            best_obj, best_x = ob, xb
            # pull the centre toward the incumbent; the midpoint of a strictly
            # feasible and a feasible point is strictly feasible
            mid = 0.5 * (x0 + xb)
            if _max_violation(constraints, mid) < 0.0:
                x0 = mid
        info["gap"] = upper - best_obj
        if math.isfinite(upper) and upper - best_obj <= gap_tol * scale:
            viol = max(0.0, lp.violation(best_x))
            return SolverReport(OPTIMAL, best_obj, best_x, viol, info["rounds"], info)
        if len(pool) >= max_cuts:
            return SolverReport(ITERATION_LIMIT, best_obj, best_x,
                                max(0.0, lp.violation(best_x)), info["rounds"], info)

        added = 0
        for fam, vals in zip(constraints, per_family):
            # supporting hyperplanes at the boundary point for members violated
            # at the iterate or just outside the boundary
            idx = _worst_members(vals, tol, cuts_per_round)
            idx_out = _worst_members(fam.values(xout), 0.0, cuts_per_round)
            added += pool.add(fam, xb, np.union1d(idx, idx_out), separate=x)
        if added == 0:
            for fam, vals in zip(constraints, per_family):
                added += pool.add(fam, x, _worst_members(vals, tol, cuts_per_round))
        if added == 0:
            info["stalled"] = True
            return SolverReport(ITERATION_LIMIT, best_obj, best_x,
                                max(0.0, lp.violation(best_x)), info["rounds"], info)
