"""Linear programming: a dense two-phase simplex and a HiGHS backend.

Problems are always stated as maximizations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

LE, EQ, GE = "<=", "=", ">="
_RELATIONS = {LE, EQ, GE, "<", "==", ">"}
_CANON = {"<": LE, "==": EQ, ">": GE}

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"
NUMERICAL = "numerical-error"


@dataclass
class LinearProgram:
    """maximize c.x subject to A x (rel) b and lo <= x <= hi."""

    objective: np.ndarray
    A: np.ndarray
    relations: list[str]
    b: np.ndarray
    bounds: list[tuple[float, float]] | None = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).ravel()
        n = self.objective.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.relations = [_CANON.get(r, r) for r in self.relations]
        if len(self.relations) != self.A.shape[0] or self.b.size != self.A.shape[0]:
            raise ValueError("constraint matrix, relations and bounds disagree in length")
        bad = set(self.relations) - _RELATIONS
        if bad:
            raise ValueError(f"unknown relations {bad}")
        if self.bounds is None:
            self.bounds = [(0.0, math.inf)] * n
        if len(self.bounds) != n:
            raise ValueError("one (lo, hi) pair per variable is required")
        self.bounds = [(float(-math.inf if lo is None else lo),
                        float(math.inf if hi is None else hi)) for lo, hi in self.bounds]
        for lo, hi in self.bounds:
            if lo > hi:
                raise ValueError(f"empty variable range [{lo}, {hi}]")

    @classmethod
    def from_rows(cls, objective, rows: Sequence[tuple[Sequence[float], str, float]],
                  bounds=None) -> "LinearProgram":
        n = len(objective)
        A = np.array([r[0] for r in rows], dtype=float).reshape(-1, n)
        return cls(objective, A, [r[1] for r in rows], [r[2] for r in rows], bounds)

    @property
    def is_bounded(self) -> bool:
        return all(math.isfinite(lo) and math.isfinite(hi) for lo, hi in self.bounds)

    @property
    def num_vars(self) -> int:
        return self.objective.size

    def violation(self, x) -> float:
        """Largest absolute violation of any row or variable bound at x."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        if self.A.shape[0]:
            r = self.A @ x - self.b
            rel = np.array(self.relations)
            worst = max(worst,
                        float(np.max(np.where(rel == LE, r, 0.0), initial=0.0)),
                        float(np.max(np.where(rel == GE, -r, 0.0), initial=0.0)),
                        float(np.max(np.where(rel == EQ, np.abs(r), 0.0), initial=0.0)))
        lo = np.array([bd[0] for bd in self.bounds])
        hi = np.array([bd[1] for bd in self.bounds])
        worst = max(worst, float(np.max(lo - x, initial=0.0)), float(np.max(x - hi, initial=0.0)))
        return worst


@dataclass
class SolverReport:
    status: str
    objective_value: float
    solution: np.ndarray
    max_constraint_violation: float
    iterations: int
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def solve_lp(lp: LinearProgram, tol: float = 1e-9, method: str = "simplex",
             max_iter: int = 50_000) -> SolverReport:
    """Solve ``lp``; infeasibility and unboundedness are reported in ``status``.

    ``simplex`` uses the bounded dual simplex when every variable has finite
    bounds and the dense tableau otherwise; ``dual``, ``tableau`` and
    ``highs`` select an engine explicitly.
    """
    if method == "simplex":
        method = "dual" if lp.is_bounded else "tableau"
    if method == "dual":
        return LPSession(lp, tol, max_iter).solve()
    if method == "tableau":
        return _solve_simplex(lp, tol, max_iter)
    if method == "highs":
        return _solve_highs(lp, tol, max_iter)
    raise ValueError(f"unknown LP method {method!r}")


class LPSession:
    """Bounded LP solved by a dual simplex over active constraint sets.

    All constraints are kept as a_i.x <= b_i (equalities become two rows).
    A basis is a set of n constraints with independent normals; the initial
    basis puts every variable at the bound its objective coefficient favours,
    which is dual feasible, so no phase 1 is needed. Rows may be appended
    between solves and the previous basis stays dual feasible, which makes
    the session a cheap warm start for cutting-plane loops. The basis
    inverse is updated by rank-one corrections and recomputed from the
    original data every ``refactor`` pivots and before reporting.
    """

    refactor = 40

    def __init__(self, lp: LinearProgram, tol: float = 1e-9, max_iter: int = 50_000):
        if not lp.is_bounded:
            raise ValueError("LPSession needs finite bounds on every variable")
        self.c = lp.objective.copy()
        self.n = n = self.c.size
        self.lo = np.array([bd[0] for bd in lp.bounds])
        self.hi = np.array([bd[1] for bd in lp.bounds])
        self.tol = tol
        self.max_iter = max_iter
        self.rows = np.zeros((0, n))
        self.rhs = np.zeros(0)
        self.norms = np.zeros(0)
        # basis codes: j < n upper bound of x_j, n <= j < 2n lower bound of
        # x_{j-n}, j >= 2n general row j - 2n
        self.basis = np.where(self.c > 0, np.arange(n), n + np.arange(n))
        self.B = self._normals(self.basis)
        self.Bb = self._rhs(self.basis)
        self.Binv = np.linalg.inv(self.B)
        self.since_refactor = 0
        self.iterations = 0
        self.add_rows(*_as_le_rows(lp))

    def add_rows(self, A, b):
        A = np.asarray(A, dtype=float).reshape(-1, self.n)
        b = np.asarray(b, dtype=float).ravel()
        if A.shape[0] == 0:
            return
        norms = np.maximum(np.abs(A).max(axis=1), 1e-300)
        self.rows = np.vstack([self.rows, A])
        self.rhs = np.concatenate([self.rhs, b])
        self.norms = np.concatenate([self.norms, norms])

    def _normal(self, code):
        n = self.n
        if code < n:
            v = np.zeros(n)
            v[code] = 1.0
            return v
        if code < 2 * n:
            v = np.zeros(n)
            v[code - n] = -1.0
            return v
        return self.rows[code - 2 * n]

    def _normals(self, codes):
        n = self.n
        codes = np.asarray(codes)
        out = np.zeros((codes.size, n))
        idx = np.arange(codes.size)
        up = codes < n
        down = (codes >= n) & (codes < 2 * n)
        gen = codes >= 2 * n
        out[idx[up], codes[up]] = 1.0
        out[idx[down], codes[down] - n] = -1.0
        out[gen] = self.rows[codes[gen] - 2 * n]
        return out

    def _rhs1(self, code):
        n = self.n
        if code < n:
            return self.hi[code]
        if code < 2 * n:
            return -self.lo[code - n]
        return self.rhs[code - 2 * n]

    def _rhs(self, codes):
        n = self.n
        codes = np.asarray(codes)
        out = np.empty(codes.size)
        up = codes < n
        down = (codes >= n) & (codes < 2 * n)
        gen = codes >= 2 * n
        out[up] = self.hi[codes[up]]
        out[down] = -self.lo[codes[down] - n]
        out[gen] = self.rhs[codes[gen] - 2 * n]
        return out

    def _refresh(self):
        self.B = self._normals(self.basis)
        self.Bb = self._rhs(self.basis)
        self.Binv = np.linalg.inv(self.B)
        self.since_refactor = 0

    def solve(self) -> SolverReport:
        try:
            return self._solve()
        except np.linalg.LinAlgError:
            # a singular basis slipped through the pivot tolerances
            return SolverReport(NUMERICAL, math.nan, np.full(self.n, np.nan), math.inf, 0)

    def _solve(self) -> SolverReport:
        n = self.n
        ftol = 0.5 * self.tol
        degenerate = 0
        start = self.iterations
        if self.since_refactor:
            self._refresh()
        last = math.inf
        while True:
            Binv = self.Binv
            x = Binv @ self.Bb
            if self.since_refactor:
                # one refinement step keeps x honest while the inverse drifts
                x += Binv @ (self.Bb - self.B @ x)
            m = self.rhs.size
            v = np.empty(2 * n + m)
            v[:n] = x - self.hi
            v[n:2 * n] = self.lo - x
            if m:
                v[2 * n:] = (self.rows @ x - self.rhs) / self.norms
            v[self.basis] = 0.0
            r = int(np.argmax(v))
            if v[r] <= ftol:
                if self.since_refactor:
                    self._refresh()
                    x = self.Binv @ self.Bb
                    x += self.Binv @ (self.Bb - self.B @ x)
                    if self._scaled_violation(x) > ftol:
                        continue
                y = self.Binv.T @ self.c
                return SolverReport(OPTIMAL, float(self.c @ x), x, self._violation(x),
                                    self.iterations - start, {"duals": (self.basis.copy(), y)})
            if self.iterations - start >= self.max_iter:
                return SolverReport(ITERATION_LIMIT, float(self.c @ x), x, self._violation(x),
                                    self.iterations - start)
            bland = degenerate > 20
            if bland:
                r = int(np.flatnonzero(v > ftol)[0])
            a_r = self._normal(r)
            y = np.maximum(Binv.T @ self.c, 0.0)
            w = Binv.T @ a_r
            wmax = float(np.abs(w).max())
            piv = 1e-9 * max(1.0, wmax)
            ok = (w > piv).nonzero()[0]
            if ok.size == 0:
                if self.since_refactor:
                    self._refresh()
                    continue
                return SolverReport(INFEASIBLE, math.nan, np.full(n, np.nan),
                                    float(v[r]), self.iterations - start)
            t = y[ok] / w[ok]
            tmin = float(t.min())
            ties = ok[t <= tmin + 1e-12 * max(1.0, tmin)]
            if bland:
                q = int(ties[np.argmin(self.basis[ties])])
            else:
                q = int(ties[np.argmax(w[ties])])
            if w[q] < 1e-6 * wmax and self.since_refactor >= 8:
                # small pivots are where a drifting inverse misleads; recheck
                self._refresh()
                continue
            # the bound c.x falls with every pivot; a stall counts as degenerate
            obj = float(self.c @ x)
            stalled = tmin <= 1e-14 or last - obj <= 1e-12 * max(1.0, abs(obj))
            degenerate = degenerate + 1 if stalled else 0
            last = obj
            self._replace(q, r, a_r)
            self.iterations += 1

    def _replace(self, q, r, a_r):
        """Swap basis row q for constraint r, updating the inverse."""
        self.basis[q] = r
        self.B[q] = a_r
        self.Bb[q] = self._rhs1(r)
        self.since_refactor += 1
        if self.since_refactor >= self.refactor:
            self._refresh()
            return
        # row q of B changes by u = a_r - old; B^-1 gains a rank-one term
        Binv = self.Binv
        col = Binv[:, q].copy()
        z = a_r @ Binv           # new row times old inverse
        denom = z[q]
        if abs(denom) < 1e-12:
            self._refresh()
            return
        z[q] -= 1.0
        Binv -= (col / denom)[:, None] * z[None, :]

    def _scaled_violation(self, x) -> float:
        worst = max(float(np.max(x - self.hi, initial=0.0)), float(np.max(self.lo - x, initial=0.0)))
        if self.rhs.size:
            worst = max(worst, float(np.max((self.rows @ x - self.rhs) / self.norms, initial=0.0)))
        return worst

    def _violation(self, x) -> float:
        worst = max(float(np.max(x - self.hi, initial=0.0)), float(np.max(self.lo - x, initial=0.0)))
        if self.rhs.size:
            worst = max(worst, float(np.max(self.rows @ x - self.rhs, initial=0.0)))
        return worst


def _as_le_rows(lp: LinearProgram):
    rel = np.array(lp.relations, dtype=object)
    parts_A, parts_b = [], []
    for r, sgn in ((LE, 1.0), (GE, -1.0)):
        m = rel == r
        if m.any():
            parts_A.append(sgn * lp.A[m])
            parts_b.append(sgn * lp.b[m])
    m = rel == EQ
    if m.any():
        parts_A += [lp.A[m], -lp.A[m]]
        parts_b += [lp.b[m], -lp.b[m]]
    if not parts_A:
        return np.zeros((0, lp.num_vars)), np.zeros(0)
    return np.vstack(parts_A), np.concatenate(parts_b)


# --------------------------------------------------------------------------
# dense tableau simplex
# --------------------------------------------------------------------------

def _standard_form(lp: LinearProgram):
    """Rewrite as max c'y, A'y (rel) b', y >= 0, with x = shift + T y."""
    n = lp.num_vars
    cols = []     # for each new variable: (original index, sign)
    shift = np.zeros(n)
    extra_rows = []
    for j, (lo, hi) in enumerate(lp.bounds):
        if math.isfinite(lo):
            shift[j] = lo
            cols.append((j, 1.0))
            if math.isfinite(hi):
                extra_rows.append((len(cols) - 1, hi - lo))
        elif math.isfinite(hi):
            shift[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    T = np.zeros((n, len(cols)))
    for i, (j, s) in enumerate(cols):
        T[j, i] = s
    A = lp.A @ T
    b = lp.b - lp.A @ shift
    rel = list(lp.relations)
    if extra_rows:
        E = np.zeros((len(extra_rows), len(cols)))
        for r, (i, ub) in enumerate(extra_rows):
            E[r, i] = 1.0
        A = np.vstack([A, E])
        b = np.concatenate([b, [ub for _, ub in extra_rows]])
        rel += [LE] * len(extra_rows)
    c = lp.objective @ T
    const = float(lp.objective @ shift)
    return c, A, rel, b, T, shift, const


class _Tableau:
    def __init__(self, A, rel, b, tol):
        m, n = A.shape
        A = A.copy()
        b = b.copy()
        rel = list(rel)
        for i in range(m):
            if b[i] < 0:
                A[i] *= -1
                b[i] *= -1
                rel[i] = {LE: GE, GE: LE, EQ: EQ}[rel[i]]
        n_slack = sum(r != EQ for r in rel)
        n_art = sum(r != LE for r in rel)
        N = n + n_slack + n_art
        M = np.zeros((m, N + 1))
        M[:, :n] = A
        M[:, -1] = b
        basis = np.empty(m, dtype=int)
        s = n
        art = n + n_slack
        art_cols = []
        for i, r in enumerate(rel):
            if r == LE:
                M[i, s] = 1.0
                basis[i] = s
                s += 1
            elif r == GE:
                M[i, s] = -1.0
                s += 1
                M[i, art] = 1.0
                basis[i] = art
                art_cols.append(art)
                art += 1
            else:
                M[i, art] = 1.0
                basis[i] = art
                art_cols.append(art)
                art += 1
        self.M = M
        self.basis = basis
        self.n_struct = n
        self.art_cols = np.array(art_cols, dtype=int)
        self.N = N
        self.tol = tol
        self.iterations = 0

    def reduced_costs(self, cost):
        cb = cost[self.basis]
        return cb @ self.M[:, :-1] - cost

    def pivot(self, r, c):
        M = self.M
        M[r] /= M[r, c]
        col = M[:, c].copy()
        col[r] = 0.0
        M -= np.outer(col, M[r])
        self.basis[r] = c
        self.iterations += 1

    def optimize(self, cost, allowed, max_iter):
        """Maximize cost.y over the current basis; returns a status string."""
        M = self.M
        degenerate_run = 0
        bland = False
        ptol = 1e-11
        while True:
            if self.iterations >= max_iter:
                return ITERATION_LIMIT
            d = self.reduced_costs(cost)
            d[~allowed] = 0.0
            scale = max(1.0, float(np.max(np.abs(cost))))
            cand = np.flatnonzero(d < -self.tol * scale)
            if cand.size == 0:
                return OPTIMAL
            c = int(cand[0]) if bland else int(cand[np.argmin(d[cand])])
            col = M[:, c]
            rows = np.flatnonzero(col > max(ptol, 1e-9 * float(np.max(np.abs(col)))))
            if rows.size == 0:
                return UNBOUNDED
            ratios = M[rows, -1] / col[rows]
            best = ratios.min()
            ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
            r = int(ties[np.argmin(self.basis[ties])])
            if M[r, -1] <= 1e-13:
                degenerate_run += 1
                if degenerate_run > 10:
                    bland = True
            else:
                degenerate_run = 0
                bland = False
            self.pivot(r, c)


def _solve_simplex(lp: LinearProgram, tol: float, max_iter: int) -> SolverReport:
    c, A, rel, b, T, shift, const = _standard_form(lp)
    m, n = A.shape
    if m == 0:
        if np.any(c > 0):
            return SolverReport(UNBOUNDED, math.inf, np.full(lp.num_vars, np.nan), math.inf, 0)
        x = shift.copy()
        return SolverReport(OPTIMAL, float(lp.objective @ x), x, lp.violation(x), 0)

    tab = _Tableau(A, rel, b, tol)
    allowed = np.ones(tab.N, dtype=bool)
    nan = np.full(lp.num_vars, np.nan)

    if tab.art_cols.size:
        phase1 = np.zeros(tab.N)
        phase1[tab.art_cols] = -1.0
        status = tab.optimize(phase1, allowed, max_iter)
        if status == ITERATION_LIMIT:
            return SolverReport(status, math.nan, nan, math.inf, tab.iterations)
        infeas = -float(phase1[tab.basis] @ tab.M[:, -1])
        if infeas > max(tol, 1e-9) * max(1.0, float(np.max(np.abs(b)))):
            return SolverReport(INFEASIBLE, math.nan, nan, infeas, tab.iterations)
        # drive zero-level artificials out of the basis where possible
        is_art = np.zeros(tab.N, dtype=bool)
        is_art[tab.art_cols] = True
        for r in range(m):
            if is_art[tab.basis[r]]:
                row = tab.M[r, :tab.N].copy()
                row[is_art] = 0.0
                nz = np.flatnonzero(np.abs(row) > 1e-9)
                if nz.size:
                    tab.pivot(r, int(nz[0]))
        allowed = ~is_art

    cost = np.zeros(tab.N)
    cost[:n] = c
    status = tab.optimize(cost, allowed, max_iter)
    if status != OPTIMAL:
        obj = math.inf if status == UNBOUNDED else math.nan
        return SolverReport(status, obj, nan, math.inf, tab.iterations)

    y = np.zeros(tab.N)
    y[tab.basis] = tab.M[:, -1]
    x = shift + T @ y[:n]
    viol = lp.violation(x)
    return SolverReport(OPTIMAL, float(lp.objective @ x), x, viol, tab.iterations)


# --------------------------------------------------------------------------
# HiGHS
# --------------------------------------------------------------------------

_HIGHS_STATUS = {0: OPTIMAL, 1: ITERATION_LIMIT, 2: INFEASIBLE, 3: UNBOUNDED}


def _solve_highs(lp: LinearProgram, tol: float, max_iter: int) -> SolverReport:
    from scipy.optimize import linprog

    rel = np.array(lp.relations)
    le = rel == LE
    ge = rel == GE
    eq = rel == EQ
    A_ub = np.vstack([lp.A[le], -lp.A[ge]]) if (le.any() or ge.any()) else None
    b_ub = np.concatenate([lp.b[le], -lp.b[ge]]) if A_ub is not None else None
    A_eq = lp.A[eq] if eq.any() else None
    b_eq = lp.b[eq] if eq.any() else None
    bounds = [(None if math.isinf(lo) else lo, None if math.isinf(hi) else hi)
              for lo, hi in lp.bounds]
    feas_tol = min(max(tol, 1e-10), 1e-7)
    res = linprog(-lp.objective, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=bounds, method="highs",
                  options={"primal_feasibility_tolerance": feas_tol,
                           "dual_feasibility_tolerance": feas_tol,
                           "maxiter": max_iter})
    status = _HIGHS_STATUS.get(res.status, ITERATION_LIMIT)
    iters = int(getattr(res, "nit", 0) or 0)
    if status != OPTIMAL:
        obj = math.inf if status == UNBOUNDED else math.nan
        return SolverReport(status, obj, np.full(lp.num_vars, np.nan), math.inf, iters,
                            {"message": res.message})
    x = np.asarray(res.x, dtype=float)
    return SolverReport(OPTIMAL, float(lp.objective @ x), x, lp.violation(x), iters)
