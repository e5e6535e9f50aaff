"""Command line front end.

    stochknap solve-dp --config inst.json [--delta 0.05]
    stochknap optimize-switchover --config inst.json [--batch auto|homogeneous|price-dependent]
    stochknap optimize-pricing --config frame.json [--method exact|approx] [--free-p1]
    stochknap simulate --config inst.json --policy switch --reps 100000 --seed 1
    stochknap compare --config inst.json --policy dp,switch,equal,fcfs
    stochknap bounds --config inst.json [--scale 1.8 --sweep 25,50,100]
    stochknap reproduce table1|table2|table3|table4|table5|figure1

Results go to ``--out`` (default: $STOCHKNAP_OUT or ./results).  All files of
a command are written only after the command succeeded.  Failures print one
JSON error record on stderr and exit with a code naming the failure class.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from . import bounds as bnd
from . import dp
from . import pricing as pr
from . import sim
from .batch import solve_homogeneous, solve_price_dependent
from .model import (InvalidInstance, ProblemInstance, batch_from_dict, discretize,
                    instance_from_dict, validate)
from .switchover import kernel_for, revenue_for_durations, solve_unit

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_SOLVER = 4
EXIT_IO = 5

OUT_ENV = "STOCHKNAP_OUT"

log = logging.getLogger("stochknap")


class ConfigError(Exception):
    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class SolverError(Exception):
    pass


# output -------------------------------------------------------------------

class Outputs:
    """Files collected in memory and committed together at the end."""

    def __init__(self):
        self.files: dict[str, str] = {}

    def json(self, name, obj):
        self.files[name] = json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"

    def csv(self, name, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(x) for x in r])
        self.files[name] = buf.getvalue()

    def commit(self, outdir: Path):
        outdir.mkdir(parents=True, exist_ok=True)
        staged = []
        try:
            for name, text in self.files.items():
                fd, tmp = tempfile.mkstemp(dir=outdir, prefix=f".{name}.")
                with os.fdopen(fd, "w", newline="") as fh:
                    fh.write(text)
                staged.append((tmp, outdir / name))
        except OSError:
            for tmp, _ in staged:
                os.unlink(tmp)
            raise
        for tmp, dest in staged:
            os.replace(tmp, dest)
        return [str(d) for _, d in staged]


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    raise TypeError(f"not serializable: {type(x).__name__}")


def _cell(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return int(x)
    return x


def _outdir(args) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or "results")


# configuration ------------------------------------------------------------

def _read_json(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def bundled_config(name):
    return json.loads(resources.files("stochknap").joinpath("configs", name).read_text())


def _instance(cfg) -> ProblemInstance:
    try:
        inst = instance_from_dict(cfg)
    except InvalidInstance as exc:
        raise ConfigError("invalid instance", exc.violations) from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid instance: {exc}") from exc
    bad = validate(inst)
    if bad:
        raise ConfigError("invalid instance", bad)
    return inst


def _load(args):
    if not args.config:
        raise ConfigError("--config is required")
    cfg = _read_json(args.config)
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def frame_from_dict(cfg) -> pr.PricingFrame:
    try:
        d = cfg["demand"]
        fn = pr.DemandFunction(d["kind"], float(d["a"]), float(d["b"]), d.get("modifier"))
        return pr.PricingFrame(int(cfg["W"]), int(cfg["m"]), float(cfg.get("p1", 1.0)), fn,
                               batch_from_dict(cfg.get("batch")))
    except KeyError as exc:
        raise ConfigError(f"pricing config is missing {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid pricing config: {exc}") from exc


def _delta(args, cfg):
    if args.delta is not None:
        return float(args.delta)
    return cfg.get("delta")


# commands -----------------------------------------------------------------

def cmd_solve_dp(args, out: Outputs):
    cfg = _load(args)
    inst = _instance(cfg)
    try:
        di = discretize(inst, _delta(args, cfg))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    table = dp.solve_dp(di)
    res = {"optimal_value": table.optimal_value, "delta": di.delta, "periods": di.periods,
           "W": di.W, "structure": dp.structure_report(table)}
    if di.is_unit:
        prof = dp.extract_thresholds(table)
        res["thresholds"] = prof.t
        res["threshold_violations"] = list(prof.violations)
    out.json("dp.json", res)
    V = table.values
    out.csv("dp_values.csv", ["n", "d", "value"],
            ([n + 1, d, V[n, d]] for n in range(V.shape[0]) for d in range(V.shape[1])))
    return res


def _solve_switch(inst, mode, warm=None):
    if mode == "auto":
        mode = "unit" if inst.is_unit else ("homogeneous" if inst.homogeneous else "price-dependent")
    if mode == "unit" and not inst.is_unit:
        raise ConfigError("--batch unit needs unit-size orders")
    if mode == "homogeneous" and not inst.homogeneous:
        raise ConfigError("--batch homogeneous needs one batch law shared by all classes")
    if mode == "unit":
        return solve_unit(inst), mode
    if mode == "homogeneous":
        return solve_homogeneous(inst), mode
    if mode == "price-dependent":
        return solve_price_dependent(inst, warm_start=warm), mode
    raise ConfigError(f"unknown --batch mode {mode!r}")


def cmd_optimize_switchover(args, out: Outputs):
    cfg = _load(args)
    inst = _instance(cfg)
    warm = None
    if args.warm_start:
        warm = np.asarray(_read_json(args.warm_start)["y"], float)
    sol, mode = _solve_switch(inst, args.batch, warm)
    res = dict(sol.to_dict(), mode=mode)
    out.json("switchover.json", res)
    out.csv("switchover.csv", ["class", "start", "duration", "mu"],
            ([k + 1, sol.t[k], sol.y[k], sol.mu[k]] for k in range(inst.m)))
    return res


def cmd_optimize_pricing(args, out: Outputs):
    cfg = _load(args)
    frame = frame_from_dict(cfg)
    method = {"exact": "exact", "approx": "approx", "approximate": "approx"}[args.method]
    if args.free_p1:
        sol = pr.solve_pricing_with_p1(frame, method=method)
    elif method == "exact":
        sol = pr.solve_pricing_exact(frame, seed=args.seed)
    else:
        sol = pr.solve_pricing_approx(frame)
    res = sol.to_dict()
    out.json("pricing.json", res)
    out.csv("pricing.csv", ["segment", "price", "r"],
            ([i + 1, sol.prices[i], sol.r[i]] for i in range(frame.m)))
    return res


def _policies(inst, names, delta):
    out = []
    for name in names:
        if name == "switch":
            sol, _ = _solve_switch(inst, "auto")
            out.append(sim.SwitchOver.from_solution(sol))
        elif name == "dp":
            di = discretize(inst, delta)
            out.append(sim.DPTable(dp.solve_dp(di), di.delta))
        elif name in ("fcfs", "equal"):
            out.append(name)
        else:
            raise ConfigError(f"unknown policy {name!r} (dp, switch, equal, fcfs)")
    return out


def _sim_rows(inst, cmp):
    rows = cmp.rows(inst.W, inst.T)
    return [[r["policy"], r["W"], r["T"], r["mean"], r["ci99"], r["pct_off_best"]] for r in rows]


SIM_HEADER = ["policy", "W", "T", "mean", "ci99", "pct_off_best"]


def cmd_simulate(args, out: Outputs):
    cfg = _load(args)
    inst = _instance(cfg)
    names = (args.policy or "switch").split(",")
    if len(names) != 1:
        raise ConfigError("simulate takes one --policy; use compare for several")
    pol = _policies(inst, names, _delta(args, cfg))[0]
    est = sim.simulate(inst, pol, args.reps, args.seed, args.jobs)
    res = dict(est.to_dict(), policy=names[0])
    out.json("simulate.json", res)
    out.csv("simulate.csv", SIM_HEADER, [[names[0], inst.W, inst.T, est.mean, est.half_width, 0.0]])
    return res


def cmd_compare(args, out: Outputs):
    cfg = _load(args)
    inst = _instance(cfg)
    names = (args.policy or "dp,switch,equal,fcfs").split(",")
    pols = _policies(inst, names, _delta(args, cfg))
    cmp = sim.compare_policies(inst, pols, args.reps, args.seed, args.jobs)
    res = {"rows": cmp.rows(inst.W, inst.T),
           "differences": [{"a": a, "b": b, "mean": m, "ci99": h}
                           for (a, b), (m, h) in cmp.differences.items()]}
    out.json("compare.json", res)
    out.csv("compare.csv", SIM_HEADER, _sim_rows(inst, cmp))
    return res


def cmd_bounds(args, out: Outputs):
    cfg = _load(args)
    inst = _instance(cfg)
    if not inst.is_unit:
        raise ConfigError("bounds need unit-size orders")
    bp = bnd.bounds(inst)
    res = {"upper": bp.upper, "lower": bp.lower, "regime": bp.regime, "k": bp.k, "t": bp.t,
           "switch": solve_unit(inst).objective_revenue}
    if args.sweep:
        c = args.scale if args.scale is not None else inst.T / max(inst.W, 1)
        Ws = [int(x) for x in args.sweep.split(",")]
        study = bnd.gap_study(inst, [(W, c * W) for W in Ws])
        res["gap_slope"] = study.slope
        res["sweep"] = study.rows
        rows = study.csv_rows()
        out.csv("gap_study.csv", rows[0], rows[1:])
    out.json("bounds.json", res)
    return res


# reproduction ---------------------------------------------------------------

def _pct(best, x):
    return 100.0 * (best - x) / best


def _policy_row(args):
    """Optimal (continuous time), Delta=1 DP, switch-over and equal spacing
    for one batch law at every W in ``Ws`` (the value functions of the largest
    W carry all smaller inventories)."""
    base, Ws, T = args
    inst = base.replace(W=max(Ws), T=T)
    cont = dp.solve_continuous(inst).values[-1]
    disc = dp.solve_dp(discretize(inst, 1.0)).values[0] if float(T).is_integer() else None
    rows = []
    for W in Ws:
        sub = inst.replace(W=W)
        kern = kernel_for(sub)
        sw = solve_homogeneous(sub).objective_revenue
        eq = revenue_for_durations(sub, np.full(sub.m, T / sub.m), kern)
        rows.append((W, T, float(cont[W]), None if disc is None else float(disc[W]), sw, eq))
    return rows


def _pool(jobs):
    return ProcessPoolExecutor(max_workers=jobs) if jobs and jobs > 1 else None


def _map(jobs, fn, items):
    pool = _pool(jobs)
    if pool is None:
        return [fn(x) for x in items]
    with pool:
        return list(pool.map(fn, items))


def _negbin_instances(cfg):
    for r, p in cfg["batch_params"]:
        yield (r, p), instance_from_dict(dict(cfg, batch={"kind": "negbin", "r": r, "p": p}))


def reproduce_table1(args, out: Outputs):
    cfg = bundled_config("policies_negbin.json")
    T, Ws = cfg["fixed_T"]["T"], cfg["fixed_T"]["W"]
    keys, tasks = [], []
    for rp, inst in _negbin_instances(cfg):
        keys.append(rp)
        tasks.append((inst, Ws, T))
    rows = []
    for rp, block in zip(keys, _map(args.jobs, _policy_row, tasks)):
        for W, T_, opt, d1, sw, eq in block:
            rows.append([W, f"({rp[0]},{rp[1]})", opt, sw, _pct(opt, sw), eq, _pct(opt, eq), d1])
    rows.sort(key=lambda r: (r[0], r[1]))
    header = ["W", "batch", "optimal", "switch", "pct_off_switch", "equal", "pct_off_equal",
              "optimal_dp_delta1"]
    out.csv("table1.csv", header, rows)
    return {"rows": [dict(zip(header, r)) for r in rows],
            "note": "optimal = continuous-time value; optimal_dp_delta1 = DP with unit periods"}


def reproduce_table2(args, out: Outputs):
    cfg = bundled_config("policies_negbin.json")
    tasks, keys = [], []
    for rp, inst in _negbin_instances(cfg):
        for W, T in cfg["joint"]:
            keys.append(rp)
            tasks.append((inst, [W], float(T)))
    rows = []
    for rp, block in zip(keys, _map(args.jobs, _policy_row, tasks)):
        W, T, opt, d1, sw, _ = block[0]
        rows.append([W, T, f"({rp[0]},{rp[1]})", opt, sw, _pct(opt, sw), d1])
    rows.sort(key=lambda r: (r[0], r[2]))
    header = ["W", "T", "batch", "optimal", "switch", "pct_off_switch", "optimal_dp_delta1"]
    out.csv("table2.csv", header, rows)
    return {"rows": [dict(zip(header, r)) for r in rows]}


def _pricing_row(row):
    cfg, p1 = row
    frame = frame_from_dict(dict(cfg, p1=p1))
    return pr.solve_pricing_exact(frame)


def reproduce_table3(args, out: Outputs):
    cfg = bundled_config("pricing_tables.json")
    sols = _map(args.jobs, _pricing_row, [(r, cfg["p1"]) for r in cfg["rows"]])
    header = ["W", "kind", "a", "b", "m"] + [f"p{i}" for i in range(1, 9)] + ["objective", "reported"]
    rows = []
    for r, s in zip(cfg["rows"], sols):
        p = list(s.prices) + [""] * (8 - len(s.prices))
        d = r["demand"]
        rows.append([r["W"], d["kind"], d["a"], d["b"], r["m"], *p, s.objective, r["reported"]])
    out.csv("table3.csv", header, rows)
    return {"rows": [dict(zip(header, r)) for r in rows]}


def full_price_periods(prices, tol=5e-3):
    """Segments after the first still charging the list price (to 2 decimals)."""
    p = np.asarray(prices)
    return int(np.sum(p[1:] >= p[0] - tol))


def reproduce_table4(args, out: Outputs):
    cfg = bundled_config("pricing_tables.json")
    lad = cfg["inventory_ladder"]
    items = [(dict(lad, W=W), cfg["p1"]) for W in lad["W"]]
    sols = _map(args.jobs, _pricing_row, items)
    header = ["W"] + [f"p{i}" for i in range(1, lad["m"] + 1)] + ["objective", "full_price_periods",
                                                                  "reported"]
    rows = [[W, *s.prices, s.objective, full_price_periods(s.prices), rep]
            for W, s, rep in zip(lad["W"], sols, lad["reported"])]
    out.csv("table4.csv", header, rows)
    return {"rows": [dict(zip(header, r)) for r in rows]}


def reproduce_table5(args, out: Outputs):
    cfg = bundled_config("pricing_tables.json")
    header = ["W", "kind", "a", "b", "scheme", "p1", "p2", "p3", "objective", "pct_off_exact",
              "reported"]
    rows = []
    for alt in cfg["alternatives"]:
        frame = frame_from_dict(dict(alt, m=3, p1=cfg["p1"]))
        ex = pr.solve_pricing_exact(frame)
        ap = pr.solve_pricing_approx(frame)
        fixed = pr.pricing_objective(frame, alt["ladder"])
        d = alt["demand"]
        lead = [alt["W"], d["kind"], d["a"], d["b"]]
        rows.append(lead + ["exact", *ex.prices, ex.objective, 0.0, ""])
        rows.append(lead + ["approx", *ap.prices, ap.objective, _pct(ex.objective, ap.objective),
                            alt["approx_reported"]])
        rows.append(lead + ["fixed", *alt["ladder"], fixed, _pct(ex.objective, fixed),
                            alt["ladder_reported"]])
    out.csv("table5.csv", header, rows)
    return {"rows": [dict(zip(header, r)) for r in rows]}


def reproduce_figure1(args, out: Outputs):
    cfg = bundled_config("policies_dexp12.json")
    lo, hi = cfg["figure_W"]
    inst = _instance(cfg).replace(W=hi)
    cont = dp.solve_continuous(inst).values[-1]
    T = float(inst.T)
    fcfs_y = np.zeros(inst.m)
    fcfs_y[-1] = T
    rows = []
    for W in range(lo, hi + 1):
        sub = inst.replace(W=W)
        kern = kernel_for(sub)
        rows.append([W, float(cont[W]), solve_homogeneous(sub).objective_revenue,
                     revenue_for_durations(sub, fcfs_y, kern)])
    out.csv("figure1.csv", ["W", "optimal", "switch", "fcfs"], rows)
    return {"points": len(rows)}


REPRODUCE = {
    "table1": reproduce_table1,
    "table2": reproduce_table2,
    "table3": reproduce_table3,
    "table4": reproduce_table4,
    "table5": reproduce_table5,
    "figure1": reproduce_figure1,
}


def cmd_reproduce(args, out: Outputs):
    return REPRODUCE[args.target](args, out)


# entry point ----------------------------------------------------------------

COMMANDS = {
    "solve-dp": cmd_solve_dp,
    "optimize-switchover": cmd_optimize_switchover,
    "optimize-pricing": cmd_optimize_pricing,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "bounds": cmd_bounds,
    "reproduce": cmd_reproduce,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="stochknap", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="instance JSON")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./results)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1)
        return p

    p = common(sub.add_parser("solve-dp", help="exact dynamic program"))
    p.add_argument("--delta", type=float)

    p = common(sub.add_parser("optimize-switchover", help="optimal switch-over times"))
    p.add_argument("--batch", default="auto",
                   choices=["auto", "unit", "homogeneous", "price-dependent"])
    p.add_argument("--warm-start", help="switchover.json from an earlier run")

    p = common(sub.add_parser("optimize-pricing", help="markdown price ladder"))
    p.add_argument("--method", default="exact", choices=["exact", "approx", "approximate"])
    p.add_argument("--free-p1", action="store_true", help="treat the list price as a decision")

    for name, hlp in (("simulate", "Monte Carlo estimate of one policy"),
                      ("compare", "policies on common random numbers")):
        p = common(sub.add_parser(name, help=hlp))
        p.add_argument("--policy", help="dp, switch, equal, fcfs (comma separated for compare)")
        p.add_argument("--reps", type=int, default=10_000)
        p.add_argument("--delta", type=float, help="step of the dp policy")

    p = common(sub.add_parser("bounds", help="upper/lower bounds and gap study"))
    p.add_argument("--sweep", help="comma-separated W values for a gap study")
    p.add_argument("--scale", type=float, help="T = scale * W along the sweep")

    p = common(sub.add_parser("reproduce", help="regenerate a published table"), config=False)
    p.add_argument("target", choices=sorted(REPRODUCE))
    return ap


def _fail(code, kind, message, violations=()):
    rec = {"error": kind, "message": message}
    if violations:
        rec["violations"] = list(violations)
    print(json.dumps(rec), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command in ("simulate", "compare") and args.reps < 2:
        return _fail(EXIT_USAGE, "usage", "--reps must be >= 2")
    out = Outputs()
    try:
        result = COMMANDS[args.command](args, out)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc), exc.violations)
    except InvalidInstance as exc:
        return _fail(EXIT_CONFIG, "config", "invalid instance", exc.violations)
    except (SolverError, RuntimeError, ArithmeticError, ValueError) as exc:
        return _fail(EXIT_SOLVER, "solver", f"{type(exc).__name__}: {exc}")
    try:
        written = out.commit(_outdir(args))
    except OSError as exc:
        return _fail(EXIT_IO, "io", str(exc))
    summary = {"command": args.command, "files": written}
    if isinstance(result, dict):
        summary.update({k: v for k, v in result.items()
                        if isinstance(v, (int, float, str)) and not isinstance(v, bool)})
    print(json.dumps(summary, default=_jsonable))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
