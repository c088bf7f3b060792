"""Command-line front end: single solves, experiment campaigns, bounds.

Exit codes: 0 success, 1 internal error, 2 infeasible target, 64 usage.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import math
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import __version__
from .analysis import (asymptotic_sum_rate, feasibility_probability, prop1_avg_sum_rate_lb,
                       prop2_avg_harvest_lb)
from .model import SystemParams, Targets, dbm_to_watts, sample_channels, watts_to_dbm
from .montecarlo import PRESETS, ExperimentConfig, preset, run_experiment
from .optimizers import (CONVEX_MAX_USERS, SearchConfig, solve_baseline_swipt,
                         solve_p1_sum_rate, solve_p2_suboptimal, solve_p3_harvest,
                         solve_p4_suboptimal)

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_USAGE = 0, 1, 2, 64
WORKERS_ENV = "DEBIT_WORKERS"
POWER_FIELDS = ("user_power", "relay_power", "peak_power", "antenna_noise",
                "conversion_noise", "relay_noise", "user_noise")
FLOAT_FIELDS = POWER_FIELDS + ("efficiency", "channel_gain", "phase_duration", "distance")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_power(text: str) -> float:
    """Watts from '0.5', '0.5W', '30dBm' or '30 dBm'."""
    s = str(text).strip().replace(" ", "")
    low = s.lower()
    try:
        if low.endswith("dbm"):
            return dbm_to_watts(float(s[:-3]))
        if low.endswith("w"):
            return float(s[:-1])
        return float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a power value: {text!r}") from None


def parse_ratio(text: str) -> float:
    """Linear ratio from '10' or '10dB'."""
    s = str(text).strip().replace(" ", "")
    try:
        if s.lower().endswith("db"):
            return 10.0 ** (float(s[:-2]) / 10.0)
        return float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a ratio: {text!r}") from None


def read_config_file(path) -> dict[str, str]:
    """Flat 'key = value' text; '#' starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def build_params(values: dict) -> SystemParams:
    """Paper defaults for K users, overridden by any SystemParams field."""
    K = int(values.get("num_users", 8))
    over = {}
    for name in FLOAT_FIELDS:
        if values.get(name) is not None:
            v = values[name]
            over[name] = parse_power(v) if name in POWER_FIELDS else float(v)
    if values.get("papr_db") is not None:
        P = over.get("user_power", 1.0)
        over["peak_power"] = P * parse_ratio(f"{values['papr_db']}dB")
    if "relay_power" not in over and "user_power" in over:
        over["relay_power"] = K * over["user_power"]
    try:
        return SystemParams.paper_defaults(K, **over)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def build_targets(values: dict) -> Targets:
    harvest = 0.0
    if values.get("target_harvest") is not None:
        harvest = parse_power(values["target_harvest"])
    if values.get("target_harvest_dbm") is not None:
        harvest = dbm_to_watts(float(values["target_harvest_dbm"]))
    rate = float(values.get("target_sum_rate") or 0.0)
    try:
        return Targets(harvest, rate)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _collect(args, names) -> dict:
    values = read_config_file(args.config) if getattr(args, "config", None) else {}
    for name in names:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    return values


PARAM_FLAGS = ("num_users", "user_power", "relay_power", "peak_power", "papr_db",
               "efficiency", "channel_gain", "distance", "target_harvest",
               "target_harvest_dbm", "target_sum_rate")


def _add_param_flags(p):
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--users", dest="num_users", type=int, help="number of users K")
    p.add_argument("--user-power", help="per-user average power (W or dBm, e.g. 30dBm)")
    p.add_argument("--relay-power", help="relay power budget (W or dBm); default K times user power")
    p.add_argument("--peak-power", help="per-user peak power (W or dBm)")
    p.add_argument("--papr-db", type=float, help="peak-to-average power ratio in dB")
    p.add_argument("--efficiency", type=float, help="energy conversion efficiency")
    p.add_argument("--channel-gain", type=float, help="average channel power gain")
    p.add_argument("--distance", type=float, help="user-relay distance in metres")
    p.add_argument("--target-harvest", help="harvest target (W or dBm)")
    p.add_argument("--target-harvest-dbm", type=float, help="harvest target in dBm")
    p.add_argument("--target-sum-rate", type=float, help="sum-rate target in bits/s/Hz")


def _search_config(args) -> SearchConfig:
    cfg = SearchConfig()
    if getattr(args, "search_tol", None) is not None:
        cfg = replace(cfg, search_tol=args.search_tol)
    return cfg


# --------------------------------------------------------------------------
# solve
# --------------------------------------------------------------------------

def _fmt_dbm(w: float) -> str:
    d = watts_to_dbm(w)
    return "-inf dBm" if math.isinf(d) else f"{d:.4f} dBm"


def cmd_solve(args) -> int:
    values = _collect(args, PARAM_FLAGS)
    params = build_params(values)
    targets = build_targets(values)
    if args.problem in ("p1", "p3") and params.num_users > CONVEX_MAX_USERS:
        raise UsageError(f"{args.problem} supports K <= {CONVEX_MAX_USERS}; use p2/p4 for larger networks")
    ch = sample_channels(params, args.seed)
    cfg = _search_config(args)
    if args.problem == "p1":
        sol = solve_p1_sum_rate(params, ch, targets, cfg)
    elif args.problem == "p2":
        sol = solve_p2_suboptimal(params, ch, targets)
    elif args.problem == "p3":
        sol = solve_p3_harvest(params, ch, targets, cfg)
    elif args.problem == "p4":
        sol = solve_p4_suboptimal(params, ch, targets)
    else:
        sol = solve_baseline_swipt(params, ch, targets, args.mode)

    print(f"problem      {args.problem}  K={params.num_users}  seed={args.seed}")
    print(f"feasible     {sol.feasible}")
    if not sol.feasible:
        print(f"reason       {sol.diagnostics.get('reason', 'target out of reach')}")
    print(f"sum rate     {sol.sum_rate:.6f} bits/s/Hz")
    print(f"harvested    {sol.harvested:.6e} W ({_fmt_dbm(sol.harvested)})")
    if sol.alloc is not None:
        a = sol.alloc
        print(f"time split   {a.alpha:.6g}   power split {a.theta:.6g}   relay gain {a.omega:.6g}")
        for k in range(params.num_users):
            print(f"  user {k}: p_E={a.energy_powers[k]:.6g} p_1={a.info_powers_1[k]:.6g} "
                  f"p_2={a.info_powers_2[k]:.6g} R={sol.rates[k]:.6g}")
    if args.out:
        doc = {
            "problem": args.problem,
            "seed": args.seed,
            "version": __version__,
            "params": asdict(params),
            "targets": asdict(targets),
            "solution": sol.to_dict(),
            "harvested_dbm": watts_to_dbm(sol.harvested),
        }
        Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if sol.feasible else EXIT_INFEASIBLE


# --------------------------------------------------------------------------
# experiment
# --------------------------------------------------------------------------

def experiment_from_file(path) -> ExperimentConfig:
    values = read_config_file(path)
    try:
        kind = values.pop("kind")
        variable = values.pop("sweep_variable")
        sweep = tuple(float(v) for v in values.pop("sweep_values").split(","))
    except KeyError as exc:
        raise UsageError(f"{path}: missing key {exc}") from None
    schemes = tuple(s.strip() for s in values.pop("schemes", "p2").split(","))
    trials = int(values.pop("trials", 2000))
    seed = int(values.pop("seed", 0))
    skip = values.pop("skip_large", "false").lower() in ("1", "true", "yes")
    if variable == "num_users" and "num_users" not in values:
        values["num_users"] = str(int(sweep[0]))
    try:
        return ExperimentConfig(kind, build_params(values), build_targets(values),
                                (variable, sweep), trials, seed, schemes, skip_large=skip)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def write_curve_csv(path, data, scheme) -> None:
    c = data.curves[scheme]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sweep_value", "mean", "stderr", "trials", "feasible_fraction"])
        for i, v in enumerate(data.sweep_values):
            w.writerow([f"{v:.12g}", f"{c.mean[i]:.12g}", f"{c.stderr[i]:.12g}",
                        int(c.trials[i]), f"{c.feasible_fraction[i]:.12g}"])


def write_ratio_csv(path, data, num, den) -> None:
    """Per-point ratio of two scheme means (NaN where undefined)."""
    a, b = data.curves[num].mean, data.curves[den].mean
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sweep_value", "ratio"])
        for i, v in enumerate(data.sweep_values):
            r = a[i] / b[i] if b[i] > 0 else math.nan
            w.writerow([f"{v:.12g}", f"{r:.12g}"])


def _ratio_pair(cfg):
    if cfg.metric == "harvest_w" and "baseline" in cfg.schemes:
        for s in ("p4", "p3"):
            if s in cfg.schemes:
                return s, "baseline"
    return None


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def cmd_experiment(args) -> int:
    if bool(args.preset) == bool(args.config):
        raise UsageError("give exactly one of --preset or --config")
    if args.preset:
        cfg = preset(args.preset, trials=args.trials or 2000, seed=args.seed or 0)
    else:
        cfg = experiment_from_file(args.config)
        over = {}
        if args.trials:
            over["trials"] = args.trials
        if args.seed is not None:
            over["seed"] = args.seed
        if over:
            cfg = replace(cfg, **over)
    cfg = replace(cfg, search=_search_config(args))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tag = args.preset or Path(args.config).stem
    paths = {s: str(out / f"{tag}_{s}.csv") for s in cfg.schemes}
    pair = _ratio_pair(cfg)
    if pair:
        paths["ratio"] = str(out / f"{tag}_{pair[0]}_over_{pair[1]}.csv")
    manifest = {
        "version": __version__,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "workers": args.workers,
        "outputs": paths,
        "start": _now(),
        "end": None,
    }
    mpath = out / f"{tag}_manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    data = run_experiment(cfg, workers=args.workers)
    for s in cfg.schemes:
        write_curve_csv(paths[s], data, s)
    if pair:
        write_ratio_csv(paths["ratio"], data, *pair)
    manifest["end"] = _now()
    manifest["errors"] = {str(k): v for k, v in data.errors.items()}
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    unit = "W" if cfg.metric == "harvest_w" else "bits/s/Hz"
    print(f"{tag}: {cfg.kind}, {cfg.trials} trials, seed {cfg.seed}, values in {unit}")
    print(f"{cfg.sweep[0]:>12} " + " ".join(f"{s:>14}" for s in cfg.schemes))
    for i, v in enumerate(data.sweep_values):
        cells = []
        for s in cfg.schemes:
            m = data.curves[s].mean[i]
            cells.append(f"{'-':>14}" if math.isnan(m) else f"{m:>14.6g}")
        if pair:
            b = data.curves[pair[1]].mean[i]
            r = data.curves[pair[0]].mean[i] / b if b > 0 else math.nan
            cells.append(f"  {pair[0]}/{pair[1]} = {r:.4g}")
        print(f"{v:>12g} " + " ".join(cells))
    for i, msg in data.errors.items():
        print(f"sweep point {data.sweep_values[i]:g} aborted: {msg}", file=sys.stderr)
    print(f"manifest: {mpath}")
    return EXIT_ERROR if data.errors else EXIT_OK


# --------------------------------------------------------------------------
# bounds
# --------------------------------------------------------------------------

def cmd_bounds(args) -> int:
    import warnings

    values = _collect(args, PARAM_FLAGS)
    params = build_params(values)
    targets = build_targets(values)
    K = params.num_users
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lb = prop1_avg_sum_rate_lb(params, targets)
    rows.append(("feasibility probability", feasibility_probability(params, targets), ""))
    rows.append(("average sum-rate lower bound", lb.value, "bits/s/Hz"))
    if lb.inputs is not None:
        rows.append(("  asymptotic time split", lb.inputs.alpha_sub0, ""))
        rows.append(("  asymptotic relay gain", lb.inputs.omega_sub0, ""))
    rows.append(("large-K approximation", asymptotic_sum_rate(params, targets, "approx26"), "bits/s/Hz"))
    if abs(params.relay_power - K * params.symmetric_power) <= 1e-9 * K * params.symmetric_power:
        rows.append(("limit with relay budget K P", asymptotic_sum_rate(params, targets, "limit27"),
                     "bits/s/Hz"))
    rows.append(("limit with fixed relay budget", asymptotic_sum_rate(params, targets, "limit28"),
                 "bits/s/Hz"))
    full = prop2_avg_harvest_lb(params, targets)
    simple = prop2_avg_harvest_lb(params, targets, simplified=True)
    rows.append(("average harvest lower bound", full.value, "W"))
    rows.append(("average harvest lower bound, simplified", simple.value, "W"))
    print(f"K={K}  target harvest {targets.target_harvest:.6g} W  "
          f"target sum rate {targets.target_sum_rate:g} bits/s/Hz")
    for label, v, unit in rows:
        print(f"{label:<42} {v:.10g} {unit}".rstrip())
    if not full.feasible:
        print("sum-rate target leaves a negative harvest bound (reported as 0)")
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="debit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("solve", help="solve one design problem on one channel draw")
    p.add_argument("--problem", required=True, choices=("p1", "p2", "p3", "p4", "baseline"))
    p.add_argument("--mode", default="sum-rate", choices=("sum-rate", "harvest"),
                   help="baseline objective")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--search-tol", type=float, help="outer search resolution (p1, p3)")
    p.add_argument("--out", help="write the solution as JSON")
    _add_param_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("experiment", help="run a Monte Carlo campaign")
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--config", help="experiment file (kind, sweep_variable, sweep_values, ...)")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", default="results")
    p.add_argument("--workers", type=int, default=default_workers(),
                   help=f"worker processes (default from ${WORKERS_ENV}, else 1)")
    p.add_argument("--search-tol", type=float, help="outer search resolution (p1, p3)")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("bounds", help="print the closed-form bounds")
    _add_param_flags(p)
    p.set_defaults(func=cmd_bounds)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"debit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except argparse.ArgumentTypeError as exc:
        print(f"debit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"debit: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
