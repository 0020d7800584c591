"""
Command-line front end.

    swipt-opt {evaluate|optimize|grid|simulate|sweep} [--config FILE] [--seed N]
              [--jobs N] [--format csv|human] [--out PATH] [--preset NAME]
              [--set key=value ...]

Every command writes one CSV row per result (RFC 4180, header with units,
``schema_version`` first). Network power is reported per km^2.

Exit codes: 0 success (for ``evaluate``: feasible), 1 infeasible, 2 invalid
configuration, 3 non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import secrets
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .config import KEYS, ConfigError, RunConfig, load_config, parse_value, preset_names
from .core import decision_of
from .objective import SLACK_KEYS, evaluate
from .simulator import run_sim, write_raw_csv
from .solver import ga_optimize, grid_gap, grid_search

SCHEMA_VERSION = 1
PER_KM2 = 1e6

EXIT_OK, EXIT_INFEASIBLE, EXIT_INVALID, EXIT_NONCONV = 0, 1, 2, 3

_SLACK_UNITS = {"C1_dl": "-", "C1_ul": "-", "C2": "W", "C3": "-", "C4": "-", "C5": "m^-2",
                "users_per_bs": "users"}

DECISION_COLS = [("p_tx", "W"), ("lambda_b", "m^-2"), ("split", "-")]
EVAL_COLS = DECISION_COLS + [
    ("tau_d", "s/bit"), ("tau_dI", "s/bit"), ("tau_u", "s/bit"), ("tau_uI", "s/bit"),
    ("util_d", "-"), ("util_u", "-"), ("w_d", "-"), ("o_bar", "W"), ("cdf_h0", "-"),
    ("objective", "W/km^2"), ("fitness", "W/km^2"), ("feasible", "-"), ("status", "-"),
] + [(f"slack_{k}", _SLACK_UNITS[k]) for k in SLACK_KEYS]
SEARCH_COLS = [("generations", "-"), ("evals", "-"), ("termination", "-")]
GRID_COLS = [("grid_gap", "W/km^2")]
_SIM_QTY = [("tau_d", "s/bit"), ("tau_dI", "s/bit"), ("tau_u", "s/bit"), ("tau_uI", "s/bit"),
            ("util_d", "-"), ("cdf_h0", "-")]
SIM_COLS = [(f"sim_{q}", u) for q, u in _SIM_QTY] + [(f"sim_{q}_ci", u) for q, u in _SIM_QTY] + [
    ("sim_objective", "W/km^2"), ("sim_replications", "-"), ("sim_n_bs", "-"),
    ("sim_side", "m")]

log = logging.getLogger("swipt_opt")


# ---------------------------------------------------------------------------
# row builders


def _eval_row(ev):
    dv = decision_of(ev.scenario)
    row = {"p_tx": dv.p_tx, "lambda_b": dv.lambda_b, "split": dv.split}
    p = ev.perf
    for k in ("tau_d", "tau_dI", "tau_u", "tau_uI", "util_d", "util_u", "w_d", "o_bar"):
        row[k] = getattr(p, k) if p is not None else math.nan
    fr = ev.feasibility
    row.update(cdf_h0=ev.cdf_h, objective=fr.objective * PER_KM2, fitness=ev.fitness * PER_KM2,
               feasible=fr.feasible, status=fr.status)
    row.update({f"slack_{k}": fr.slacks[k] for k in SLACK_KEYS})
    return row


def _sim_row(run, scn):
    rep = run_sim(scn, run.sim)
    row = {}
    for q, _ in _SIM_QTY:
        mean, ci = getattr(rep, q)
        row[f"sim_{q}"], row[f"sim_{q}_ci"] = mean, ci
    e, r = scn.energy, scn.radio
    u = min(rep.util_d[0], 1.0)
    row["sim_objective"] = scn.population.lambda_b * (e.q1 + u * (e.q2 + e.q3 * (r.p_tx - r.p_min))) * PER_KM2
    row.update(sim_replications=len(rep.replications), sim_n_bs=rep.n_bs, sim_side=rep.side)
    return row, rep


def task_evaluate(run: RunConfig):
    ev = evaluate(run.scenario, run.fitness)
    return _eval_row(ev), ev


def task_optimize(run: RunConfig):
    res = ga_optimize(run.scenario, run.ga, run.fitness)
    row = _eval_row(res.evaluation)
    row.update(generations=res.generations, evals=res.evals, termination=res.termination)
    return row, res


def task_grid(run: RunConfig):
    res = grid_search(run.scenario, run.grid_steps, run.fitness, run.ga.jobs)
    row = _eval_row(res.evaluation)
    row.update(generations=res.generations, evals=res.evals, termination=res.termination)
    row["grid_gap"] = grid_gap(run.scenario, res, run.grid_steps, run.grid_refine,
                               run.fitness) * PER_KM2
    return row, res


# ---------------------------------------------------------------------------
# output


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def render(rows, cols, fmt="csv"):
    """Render rows to text. ``cols`` is a list of ``(name, unit)``."""
    cols = [("schema_version", "-")] + list(cols)
    buf = io.StringIO()
    if fmt == "csv":
        wr = csv.writer(buf, lineterminator="\r\n")
        wr.writerow([f"{n} [{u}]" for n, u in cols])
        for row in rows:
            row = dict(row, schema_version=SCHEMA_VERSION)
            wr.writerow([_fmt(row.get(n)) for n, _ in cols])
        return buf.getvalue()
    width = max(len(n) for n, _ in cols)
    for i, row in enumerate(rows):
        if i:
            buf.write("\n")
        row = dict(row, schema_version=SCHEMA_VERSION)
        for n, u in cols:
            unit = "" if u == "-" else f" {u}"
            buf.write(f"{n:<{width}}  {_fmt(row.get(n))}{unit}\n")
    return buf.getvalue()


def _emit(text, out):
    if out:
        with open(out, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# commands


def cmd_evaluate(run, args):
    row, ev = task_evaluate(run)
    _emit(render([row], EVAL_COLS, args.format), args.out)
    if ev.feasibility.status == "nonconvergence":
        return EXIT_NONCONV
    return EXIT_OK if ev.feasibility.feasible else EXIT_INFEASIBLE


def cmd_optimize(run, args):
    row, _ = task_optimize(run)
    _emit(render([row], EVAL_COLS + SEARCH_COLS, args.format), args.out)
    return EXIT_OK


def cmd_grid(run, args):
    row, _ = task_grid(run)
    _emit(render([row], EVAL_COLS + SEARCH_COLS + GRID_COLS, args.format), args.out)
    return EXIT_OK


def cmd_simulate(run, args):
    row, _ = task_evaluate(run)
    srow, rep = _sim_row(run, run.scenario)
    row.update(srow)
    _emit(render([row], EVAL_COLS + SIM_COLS, args.format), args.out)
    if args.raw:
        write_raw_csv(rep, args.raw)
    return EXIT_OK


TASKS = ("evaluate", "optimize", "simulate")


def sweep_values(key, values=None, logspace=None):
    """Sorted SI values for a sweep from a list or ``(start, stop, num)``."""
    if key not in KEYS:
        raise ConfigError([(key, "unknown key")])
    kind = KEYS[key][2]
    try:
        if logspace is not None:
            start, stop, num = logspace
            vals = np.geomspace(parse_value(start, kind), parse_value(stop, kind), int(num)).tolist()
        else:
            vals = [parse_value(v, kind) for v in values.split(",") if v.strip()]
    except (ValueError, TypeError) as exc:
        raise ConfigError([(key, str(exc))]) from None
    if not vals or any(not v > 0 for v in vals):
        raise ConfigError([(key, "sweep values must be positive")])
    return sorted(vals)


def _sweep_point(payload):
    """Run the requested tasks at one sweep point; never raises."""
    run, key, value, tasks = payload
    row = {"sweep_key": key, "sweep_value": value, "status": "ok"}
    try:
        run = load_config(presets=(), sets=[f"{key}={float(value)!r}"], base=run)
        scn = run.scenario
        if "optimize" in tasks:
            r, res = task_optimize(run)
            scn = res.evaluation.scenario
        else:
            r, _ = task_evaluate(run)
        row.update(r)
        if "simulate" in tasks:
            srow, _ = _sim_row(run, scn)
            row.update(srow)
    except Exception as exc:   # recorded per point, the sweep continues
        row["status"] = f"error: {type(exc).__name__}: {exc}"
    return row


def cmd_sweep(run, args):
    tasks = [t.strip() for t in args.task.split(",") if t.strip()]
    bad = [t for t in tasks if t not in TASKS]
    if bad or not tasks:
        raise ConfigError([("--task", f"unknown task(s) {bad}; choose from {TASKS}")])
    vals = sweep_values(args.key, args.values, args.logspace)
    cols = [("sweep_key", "-"), ("sweep_value", "SI")] + EVAL_COLS
    if "optimize" in tasks:
        cols += SEARCH_COLS
    if "simulate" in tasks:
        cols += SIM_COLS
    jobs = max(1, args.jobs or 1)
    inner = replace(run, ga=replace(run.ga, jobs=1), sim=replace(run.sim, jobs=1)) if jobs > 1 else run
    payloads = [(inner, args.key, v, tasks) for v in vals]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            rows = list(pool.map(_sweep_point, payloads))
    else:
        rows = [_sweep_point(p) for p in payloads]
    _emit(render(rows, cols, args.format), args.out)
    return EXIT_OK


COMMANDS = {"evaluate": cmd_evaluate, "optimize": cmd_optimize, "grid": cmd_grid,
            "simulate": cmd_simulate, "sweep": cmd_sweep}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", action="append", default=[], metavar="FILE",
                        help="scenario file; may be repeated, later files win")
    common.add_argument("--seed", type=int, help="seed for every random stream")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--format", choices=("csv", "human"), default="csv")
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--preset", action="append", default=[], metavar="NAME",
                        help=f"apply a preset after 'paper': {', '.join(preset_names())}")
    common.add_argument("--set", action="append", default=[], nargs="+", metavar="KEY=VALUE",
                        help="override one key, e.g. --set qos.h0='6 mW'")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="swipt-opt", description=__doc__.split("\n\n")[0].strip())
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("evaluate", parents=[common], help="model outputs and slacks at the configured decision")
    sub.add_parser("optimize", parents=[common], help="genetic algorithm optimum")
    sub.add_parser("grid", parents=[common], help="grid-search optimum and its one-cell gap")
    sp = sub.add_parser("simulate", parents=[common], help="Monte Carlo check at the configured decision")
    sp.add_argument("--raw", metavar="PATH", help="also write per-replication rows")
    sw = sub.add_parser("sweep", parents=[common], help="repeat tasks over one key")
    sw.add_argument("--key", default="population.lambda_u")
    grp = sw.add_mutually_exclusive_group(required=True)
    grp.add_argument("--values", help="comma-separated values, units allowed")
    grp.add_argument("--logspace", nargs=3, metavar=("START", "STOP", "NUM"))
    sw.add_argument("--task", default="evaluate",
                    help="comma list of evaluate, optimize, simulate")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    seed = args.seed
    if seed is None:
        seed = secrets.randbelow(2 ** 31)
        print(f"seed: {seed}", file=sys.stderr)
    sets = [s for group in args.set for s in group]
    try:
        run = load_config(args.config, ["paper"] + args.preset, sets)
        jobs = max(1, args.jobs)
        run = replace(run, ga=replace(run.ga, seed=seed, jobs=jobs),
                      sim=replace(run.sim, seed=seed, jobs=jobs))
        return COMMANDS[args.command](run, args)
    except ConfigError as exc:
        for path, msg in exc.problems:
            print(f"error: {path}: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
