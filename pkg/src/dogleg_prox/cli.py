"""Command-line front end.

::

    dogleg-prox bench --family dct --sizes 500 --trials 20
    dogleg-prox phase --family dct --sizes 500 --sparsities 2,5,10,20,40
    dogleg-prox solve --instance problem.json --solver spdome

Exit status is 0 on success, 1 if any trial raised, and 2 for invalid
input (bad flags, unknown solvers, inadmissible hyperparameters).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import experiments
from .experiments import FAMILIES, instance_from_json, nre, run_trials, phase_transition
from .solvers import SOLVERS, ConfigError, SolverConfig, solve

DEFAULT_SOLVERS = ("pg", "mapg", "pdom", "spdome", "pdome")
DEFAULT_OUT = "results"
OUT_ENV = "DOGLEG_PROX_OUT"

# flag name -> SolverConfig field
_OVERRIDES = {"eta": "eta", "gamma": "gamma", "zeta": "zeta", "eps_abs": "eps_abs",
              "eps_rel": "eps_rel", "rel_tol": "rel_change_tol", "max_iter": "max_iter"}
_BUILTIN = {"family": "dct", "sizes": "500", "solvers": ",".join(DEFAULT_SOLVERS),
            "trials": 20, "seed": 0, "jobs": os.cpu_count() or 1, "sparsities": "2,5,10,20,40",
            "solver": "spdome", "stop": "subdiff"}


class UsageError(ValueError):
    pass


def _int_list(text, what):
    if isinstance(text, (list, tuple)):
        items = list(text)
    else:
        items = [t for t in str(text).replace(" ", "").split(",") if t]
    if not items:
        raise UsageError(f"{what} must be a nonempty comma-separated list")
    try:
        values = [int(v) for v in items]
    except ValueError as exc:
        raise UsageError(f"{what} must be integers: {exc}") from None
    if any(v <= 0 for v in values):
        raise UsageError(f"{what} must be positive")
    return values


def _name_list(text):
    items = list(text) if isinstance(text, (list, tuple)) else \
        [t for t in str(text).replace(" ", "").split(",") if t]
    items = [t.lower() for t in items]
    if not items:
        raise UsageError("solvers must be a nonempty comma-separated list")
    unknown = [t for t in items if t not in SOLVERS]
    if unknown:
        raise UsageError(f"unknown solver(s) {unknown}; choose from {sorted(SOLVERS)}")
    return items


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dogleg-prox",
        description="Proximal dogleg solvers for quadratic + sparsity problems.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("solver hyperparameters")
    g.add_argument("--eta", type=float, help="gradient step (default 0.999/L_s)")
    g.add_argument("--gamma", type=float,
                   help="surrogate scaling (default 0.98; 0.94 for pdome)")
    g.add_argument("--zeta", type=float,
                   help="extrapolation (default 0.5 for spdome; "
                        "0.9*(1-gamma)/(2-gamma) for pdome; forced to 0 for pg/mapg/pdom)")
    g.add_argument("--eps-abs", dest="eps_abs", type=float,
                   help="absolute subdifferential tolerance (default 1e-12)")
    g.add_argument("--eps-rel", dest="eps_rel", type=float,
                   help="relative subdifferential tolerance (default 1e-12)")
    g.add_argument("--rel-tol", dest="rel_tol", type=float,
                   help="relative-change tolerance ||dx||/(1+||x||) (default 1e-8)")
    g.add_argument("--max-iter", dest="max_iter", type=int,
                   help="iteration cap (default 2000)")
    g.add_argument("--stop", choices=("subdiff", "first"),
                   help="'subdiff' stops on the subdifferential rule only (relative-change "
                        "iteration still reported); 'first' stops on whichever rule fires "
                        "first (default subdiff)")
    o = common.add_argument_group("output")
    o.add_argument("--out", help=f"output root (default ${OUT_ENV} or '{DEFAULT_OUT}')")
    o.add_argument("--run-id", dest="run_id", help="subdirectory name for this run")
    o.add_argument("--config", help="JSON file with any of the options above; flags win")

    runs = argparse.ArgumentParser(add_help=False)
    r = runs.add_argument_group("experiment")
    r.add_argument("--family", choices=FAMILIES, help="problem family (default dct)")
    r.add_argument("--sizes", help="comma-separated measurement counts m (default 500)")
    r.add_argument("--solvers",
                   help=f"comma-separated solvers (default {','.join(DEFAULT_SOLVERS)})")
    r.add_argument("--trials", type=int, help="trials per size (default 20)")
    r.add_argument("--seed", type=int, help="trial t uses seed+t (default 0)")
    r.add_argument("--jobs", type=int,
                   help="worker processes (default: all cores); results do not depend on it")

    sub.add_parser("bench", parents=[common, runs],
                   help="mean NRE / iteration table over seeded trials")
    phase = sub.add_parser("phase", parents=[common, runs],
                           help="success rate (NRE < 1e-4) against sparsity")
    phase.add_argument("--sparsities", help="comma-separated sparsity grid (default 2,5,10,20,40)")
    one = sub.add_parser("solve", parents=[common], help="run one solver on a JSON instance")
    one.add_argument("--instance", required=True, help="instance JSON file")
    one.add_argument("--solver", help="solver name (default spdome)")
    return parser


def _resolve(args) -> dict:
    """Merge built-in defaults < config file < command-line flags."""
    opts = dict(_BUILTIN)
    if args.config:
        try:
            with open(args.config) as fh:
                from_file = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(from_file, dict):
            raise UsageError("config file must hold a JSON object")
        opts.update({k.replace("-", "_"): v for k, v in from_file.items()})
    opts.update({k: v for k, v in vars(args).items() if v is not None})
    if opts.get("out") is None:
        opts["out"] = os.environ.get(OUT_ENV, DEFAULT_OUT)
    return opts


def _overrides(opts) -> dict:
    return {field: opts[flag] for flag, field in _OVERRIDES.items() if opts.get(flag) is not None}


def _cmd_bench(opts) -> int:
    sizes = _int_list(opts["sizes"], "sizes")
    solvers = _name_list(opts["solvers"])
    trials = int(opts["trials"])
    if trials < 1:
        raise UsageError("trials must be at least 1")
    if opts["family"] not in FAMILIES:
        raise UsageError(f"family must be one of {FAMILIES}")
    stop_first = opts["stop"] == "first"
    experiments.solver_configs(solvers, _overrides(opts), stop_first)
    result = run_trials(opts["family"], sizes, solvers, trials, int(opts["seed"]),
                        overrides=_overrides(opts), jobs=int(opts["jobs"]),
                        stop_on_rel_change=stop_first, keep_traces=True)
    run_id = opts.get("run_id") or f"bench-{opts['family']}-seed{opts['seed']}"
    path = experiments.write_bench(result, opts["out"], run_id)
    print(f"{'m':>6} {'solver':>8} {'mean NRE':>11} {'mean iters':>10} {'failed':>6}")
    for row in result.table():
        print(f"{row['m']:>6} {row['solver']:>8} {row['mean_nre']:>11.3e} "
              f"{row['mean_iterations']:>10.1f} {row['n_failed']:>6}")
    print(f"results written to {path}")
    return 1 if result.n_failed else 0


def _cmd_phase(opts) -> int:
    sizes = _int_list(opts["sizes"], "sizes")
    if len(sizes) != 1:
        raise UsageError("phase takes a single size m")
    grid = _int_list(opts["sparsities"], "sparsities")
    solvers = _name_list(opts["solvers"])
    trials = int(opts["trials"])
    if trials < 1:
        raise UsageError("trials must be at least 1")
    family = opts["family"]
    if family not in FAMILIES:
        raise UsageError(f"family must be one of {FAMILIES}")
    n = sizes[0] * (2 if family == "dct" else 5)
    stop_first = opts["stop"] == "first"
    experiments.solver_configs(solvers, _overrides(opts), stop_first)
    result = phase_transition(family, n, grid, solvers, trials, int(opts["seed"]),
                              overrides=_overrides(opts), jobs=int(opts["jobs"]),
                              stop_on_rel_change=stop_first)
    run_id = opts.get("run_id") or f"phase-{family}-seed{opts['seed']}"
    path = experiments.write_phase(result, opts["out"], run_id)
    for k, name, rate in result.grid():
        print(f"sparsity {k:>4} {name:>8} success {rate:.2f}")
    print(f"results written to {path}")
    return 1 if any(not o.ok for o in result.outcomes) else 0


def _cmd_solve(opts) -> int:
    name = _name_list([opts["solver"]])[0]
    try:
        with open(opts["instance"]) as fh:
            inst = instance_from_json(json.load(fh))
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise UsageError(f"cannot load instance {opts['instance']}: {exc}") from None
    overrides = _overrides(opts)
    overrides["stop_on_rel_change"] = opts["stop"] == "first"
    config = SolverConfig.for_solver(name, **overrides)
    try:
        res = solve(name, inst.objective, inst.regularizer, config, inst.x0,
                    x_star=inst.x_star)
    except (ArithmeticError, ValueError) as exc:
        print(f"error: {name} failed: {exc}", file=sys.stderr)
        return 1
    summary = res.to_json()
    if inst.x_star is not None:
        summary["nre"] = nre(res.x_final, inst.x_star)
    run_id = opts.get("run_id") or f"solve-{name}"
    tmp, final = experiments.open_run_dir(opts["out"], run_id)
    with open(tmp / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    (tmp / "traces").mkdir()
    res.write_trace_csv(tmp / "traces" / f"{name}-0.csv")
    experiments.commit_run_dir(tmp, final)
    json.dump(summary, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = _resolve(args)
        if opts.get("stop") not in ("subdiff", "first"):
            raise UsageError("stop must be 'subdiff' or 'first'")
        handler = {"bench": _cmd_bench, "phase": _cmd_phase, "solve": _cmd_solve}
        return handler[args.command](opts)
    except (UsageError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
