"""Seeded Monte Carlo campaigns: sweep one parameter, average each scheme
over channel realizations and collect curve data for the figures.

Every trial draws its channel from a seed derived from (master seed,
sweep index, trial index), so results do not depend on how trials are
scheduled across workers.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__
from .analysis import prop1_avg_sum_rate_lb, prop2_avg_harvest_lb
from .model import SystemParams, Targets, dbm_to_watts, sample_channels
from .optimizers import (CONVEX_MAX_USERS, SearchConfig, solve_baseline_swipt,
                         solve_p1_sum_rate, solve_p2_suboptimal, solve_p3_harvest,
                         solve_p4_suboptimal)

KINDS = ("sumrate-vs-papr", "rate-energy-region", "sumrate-vs-users",
         "harvest-vs-users", "bound-tightness")
SCHEMES = ("p1", "p2", "p3", "p4", "baseline", "bound")
SWEEPS = ("papr_db", "harvest_dbm", "sum_rate", "num_users")
# the harvest-vs-users campaign reports watts, everything else bits/s/Hz
HARVEST_KINDS = ("harvest-vs-users",)
JOINT_SCHEMES = ("p1", "p3")
PRESETS = ("fig2", "fig3", "fig4", "fig5")


@dataclass(frozen=True)
class ExperimentConfig:
    """One campaign. ``params`` is a template; the sweep overrides one field.

    skip_large drops P1/P3 at sweep points with K above the joint-design
    limit instead of rejecting the whole configuration.
    """

    kind: str
    params: SystemParams
    targets: Targets
    sweep: tuple[str, tuple[float, ...]]
    trials: int = 2000
    seed: int = 0
    schemes: tuple[str, ...] = ("p2",)
    search: SearchConfig = field(default_factory=SearchConfig)
    skip_large: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; choose from {KINDS}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad:
            raise ValueError(f"unknown schemes {bad}; choose from {SCHEMES}")
        name, values = self.sweep
        if name not in SWEEPS:
            raise ValueError(f"unknown sweep variable {name!r}; choose from {SWEEPS}")
        values = tuple(float(v) for v in values)
        if not values:
            raise ValueError("empty sweep")
        object.__setattr__(self, "sweep", (name, values))
        object.__setattr__(self, "schemes", tuple(self.schemes))
        for i in range(len(values)):
            self.point(i)
        if not self.skip_large:
            for i in range(len(values)):
                K = self.point(i)[0].num_users
                if K > CONVEX_MAX_USERS and any(s in JOINT_SCHEMES for s in self.schemes):
                    raise ValueError(
                        f"p1/p3 need K <= {CONVEX_MAX_USERS} (sweep reaches K = {K}); "
                        "drop them from the schemes or set skip_large")

    @property
    def metric(self) -> str:
        return "harvest_w" if self.kind in HARVEST_KINDS else "sum_rate"

    def point(self, index: int) -> tuple[SystemParams, Targets]:
        """Parameters and targets at one sweep value."""
        name, values = self.sweep
        v = values[index]
        p, t = self.params, self.targets
        if name == "papr_db":
            P = max(p.user_power)
            p = replace(p, peak_power=P * 10.0 ** (v / 10.0))
        elif name == "harvest_dbm":
            t = replace(t, target_harvest=dbm_to_watts(v))
        elif name == "sum_rate":
            t = replace(t, target_sum_rate=v)
        elif name == "num_users":
            K = int(round(v))
            if K != v:
                raise ValueError(f"number of users must be an integer, got {v}")
            # budgets per user and the relay budget scale with K
            P = p.user_power[0]
            ratio = p.relay_power / (p.num_users * P)
            p = replace(p, num_users=K, user_power=P, relay_power=ratio * K * P)
        return p, t

    def active(self, index: int) -> tuple[str, ...]:
        K = self.point(index)[0].num_users
        return tuple(s for s in self.schemes
                     if s != "bound" and not (s in JOINT_SCHEMES and K > CONVEX_MAX_USERS))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["params"] = asdict(self.params)
        d["targets"] = asdict(self.targets)
        d["sweep"] = {"variable": self.sweep[0], "values": list(self.sweep[1])}
        d["schemes"] = list(self.schemes)
        return d


@dataclass
class SchemeCurve:
    mean: np.ndarray
    stderr: np.ndarray
    trials: np.ndarray
    feasible_fraction: np.ndarray
    values: list  # per sweep point: per-trial values (None when skipped)


@dataclass
class CurveData:
    config: ExperimentConfig
    sweep_values: tuple[float, ...]
    curves: dict[str, SchemeCurve]
    errors: dict[int, str]
    version: str = __version__
    wall_time: float = 0.0

    @property
    def metric(self) -> str:
        return self.config.metric


def trial_seed(seed: int, sweep_index: int, trial_index: int) -> tuple[int, int, int]:
    """Entropy for one trial; numpy's SeedSequence hashes it."""
    return (int(seed), int(sweep_index), int(trial_index))


def _solve(scheme, kind, params, ch, targets, search):
    if scheme == "p1":
        return solve_p1_sum_rate(params, ch, targets, search)
    if scheme == "p2":
        return solve_p2_suboptimal(params, ch, targets, search.lp_method)
    if scheme == "p3":
        return solve_p3_harvest(params, ch, targets, search)
    if scheme == "p4":
        return solve_p4_suboptimal(params, ch, targets, search.lp_method)
    if scheme == "baseline":
        mode = "harvest" if kind in HARVEST_KINDS else "sum-rate"
        return solve_baseline_swipt(params, ch, targets, mode, search.lp_method)
    raise ValueError(scheme)


def run_trial(cfg: ExperimentConfig, sweep_index: int, trial_index: int) -> dict:
    """Solve every active scheme on one channel draw.

    Returns {scheme: (value, feasible)}; an infeasible scheme scores zero.
    """
    params, targets = cfg.point(sweep_index)
    ch = sample_channels(params, trial_seed(cfg.seed, sweep_index, trial_index))
    out = {}
    for scheme in cfg.active(sweep_index):
        sol = _solve(scheme, cfg.kind, params, ch, targets, cfg.search)
        if cfg.metric == "harvest_w":
            value = sol.harvested if sol.feasible else 0.0
        else:
            value = sol.sum_rate if sol.feasible else 0.0
        out[scheme] = (float(value), bool(sol.feasible))
    return out


def _run_chunk(cfg, tasks):
    results = []
    for i, t in tasks:
        try:
            results.append((i, t, run_trial(cfg, i, t), None))
        except Exception as exc:  # recorded per sweep point, never dropped
            results.append((i, t, None, f"trial {t}: {type(exc).__name__}: {exc}"))
    return results


def bound_value(cfg: ExperimentConfig, index: int) -> float:
    params, targets = cfg.point(index)
    if cfg.metric == "harvest_w":
        return prop2_avg_harvest_lb(params, targets).value
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return prop1_avg_sum_rate_lb(params, targets).value


def run_experiment(cfg: ExperimentConfig, workers: int = 1, chunk: int = 8) -> CurveData:
    """Run every (sweep point, trial) pair and average in trial order."""
    start = time.perf_counter()
    n_points = len(cfg.sweep[1])
    tasks = [(i, t) for i in range(n_points) for t in range(cfg.trials)]
    chunks = [tasks[k:k + chunk] for k in range(0, len(tasks), chunk)]
    results = {}
    if workers <= 1:
        parts = (_run_chunk(cfg, c) for c in chunks)
    else:
        pool = ProcessPoolExecutor(max_workers=workers)
        parts = pool.map(_run_chunk, [cfg] * len(chunks), chunks)
    try:
        for part in parts:
            for i, t, res, err in part:
                results[(i, t)] = (res, err)
    finally:
        if workers > 1:
            pool.shutdown()

    errors = {}
    for i in range(n_points):
        msgs = [results[(i, t)][1] for t in range(cfg.trials) if results[(i, t)][1]]
        if msgs:
            errors[i] = f"{len(msgs)} failed trial(s); first: {msgs[0]}"

    curves = {}
    for scheme in cfg.schemes:
        mean = np.full(n_points, np.nan)
        se = np.full(n_points, np.nan)
        count = np.zeros(n_points, dtype=int)
        feas = np.full(n_points, np.nan)
        values = []
        for i in range(n_points):
            if scheme == "bound":
                mean[i] = bound_value(cfg, i)
                se[i] = 0.0
                values.append(None)
                continue
            if i in errors or scheme not in cfg.active(i):
                values.append(None)
                continue
            vals = np.array([results[(i, t)][0][scheme][0] for t in range(cfg.trials)])
            ok = np.array([results[(i, t)][0][scheme][1] for t in range(cfg.trials)])
            mean[i] = math.fsum(vals) / vals.size
            se[i] = float(np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
            count[i] = vals.size
            feas[i] = ok.mean()
            values.append(vals)
        curves[scheme] = SchemeCurve(mean, se, count, feas, values)
    return CurveData(cfg, cfg.sweep[1], curves, errors, __version__, time.perf_counter() - start)


def preset(name: str, trials: int = 2000, seed: int = 0) -> ExperimentConfig:
    """Configurations behind the four published figures."""
    if name == "fig2":
        return ExperimentConfig(
            "sumrate-vs-papr", SystemParams.paper_defaults(8), Targets.from_dbm(-12),
            ("papr_db", tuple(range(0, 15))), trials, seed, ("p1", "p2", "baseline"))
    if name == "fig3":
        return ExperimentConfig(
            "rate-energy-region", SystemParams.paper_defaults(8), Targets.from_dbm(-20),
            ("harvest_dbm", tuple(range(-20, -8))), trials, seed, ("p1", "p2", "baseline", "bound"))
    if name == "fig4":
        return ExperimentConfig(
            "sumrate-vs-users", SystemParams.paper_defaults(4), Targets.from_dbm(-12),
            ("num_users", tuple(range(4, 17))), trials, seed, ("p1", "p2", "bound"),
            skip_large=True)
    if name == "fig5":
        return ExperimentConfig(
            "harvest-vs-users", SystemParams.paper_defaults(2), Targets(0.0, 2.5),
            ("num_users", tuple(range(2, 13))), trials, seed, ("p3", "p4", "baseline", "bound"),
            skip_large=True)
    raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")
