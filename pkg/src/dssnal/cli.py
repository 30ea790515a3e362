"""Command-line front end: ``solve``, ``gen-data``, ``validate-gossip`` and ``bench``.

Flags can also come from a flat ``key = value`` config file (``--config``);
explicit flags win. ``DSSNAL_LOG`` sets the log level (name or number).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import shlex
import sys
import time
from pathlib import Path

import numpy as np

from . import data as datamod
from .problems import FAMILIES, make_instance
from .solver import CRITERIA, DUAL_MODES, INNER_SOLVERS, SolverConfig, config_to_dict, solve
from .topology import TopologyError, build_gossip, make_graph, validate_gossip

log = logging.getLogger("dssnal")

BENCH_COLUMNS = ["family", "solver", "R_KKT", "time", "iter", "obj", "m", "n", "S"]

# problem and run options, with their defaults; solver options are added from SolverConfig
RUN_DEFAULTS = {
    "family": None, "data": None, "gen": None, "zscore": False,
    "gamma": 0.1, "rho": 1.0, "nu": 1.0, "C": 1.0,
    "m": None, "topology": "complete", "seed": 0, "out": None,
}


class UsageError(Exception):
    pass


def configure_logging():
    level = os.environ.get("DSSNAL_LOG", "WARNING").strip()
    value = int(level) if level.isdigit() else logging.getLevelName(level.upper())
    if not isinstance(value, int):
        value = logging.WARNING
    logging.basicConfig(level=value, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def read_config(path) -> dict:
    """Flat ``key = value`` (or ``key: value``) lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            sep = "=" if "=" in line else ":"
            if sep not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split(sep, 1))
            out[key.replace("-", "_")] = value
    return out


def parse_gen(tokens) -> dict:
    """``["n=20", "S=200"]`` or ``["n=20,S=200"]`` -> ``{"n": 20, "S": 200}``."""
    if isinstance(tokens, str):
        tokens = [tokens]
    out = {}
    for tok in tokens:
        for part in str(tok).replace(",", " ").split():
            if "=" not in part:
                raise UsageError(f"bad --gen item {part!r}; expected n=.. S=..")
            key, value = part.split("=", 1)
            if key not in ("n", "S"):
                raise UsageError(f"unknown --gen key {key!r}")
            try:
                out[key] = int(value)
            except ValueError:
                raise UsageError(f"--gen {key} must be an integer, got {value!r}") from None
    if set(out) != {"n", "S"}:
        raise UsageError("--gen needs both n and S")
    return out


_TYPED = {"m": int, "seed": int, "gamma": float, "rho": float, "nu": float, "C": float}


def _coerce(key, value):
    """Convert a config-file string using the type of the option's default."""
    if key == "zscore":
        return value.lower() in ("1", "true", "yes", "on")
    default = SolverConfig.__dataclass_fields__[key].default if key in SolverConfig.keys() else None
    kind = _TYPED.get(key) or (type(default) if isinstance(default, (int, float)) else str)
    try:
        return kind(value)
    except ValueError:
        raise UsageError(f"config key {key}: cannot read {value!r} as {kind.__name__}") from None


def resolve_options(args: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags (in increasing priority)."""
    opts = dict(RUN_DEFAULTS)
    opts.update(config_to_dict(SolverConfig()))
    if getattr(args, "config", None):
        file_opts = read_config(args.config)
        unknown = set(file_opts) - set(opts)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        opts.update({k: _coerce(k, v) for k, v in file_opts.items()})
    for key, value in vars(args).items():
        if key in opts and value is not None:
            opts[key] = value
    return opts


def build_run(opts: dict):
    if opts["family"] not in FAMILIES:
        raise UsageError("--family is required (huber or svc)")
    if (opts["data"] is None) == (opts["gen"] is None):
        raise UsageError("give exactly one of --data and --gen")
    if opts["m"] is None:
        raise UsageError("--m is required")
    if opts["data"] is not None:
        ds = datamod.load_dataset(opts["data"])
    else:
        g = parse_gen(opts["gen"])
        gen = datamod.gen_random_regression if opts["family"] == "huber" else datamod.gen_random_classification
        ds = gen(g["n"], g["S"], seed=opts["seed"])
    if opts["zscore"]:
        ds = datamod.zscore(ds)
    if opts["family"] == "svc":
        ds.check_classification()
    problem = make_instance(opts["family"], ds.features, ds.labels, opts["m"], rho=opts["rho"],
                            gamma=opts["gamma"], nu=opts["nu"], C=opts["C"])
    gossip = build_gossip(opts["topology"], opts["m"], seed=opts["seed"])
    cfg_keys = set(SolverConfig.keys())
    config = SolverConfig(**{k: v for k, v in opts.items() if k in cfg_keys})
    return ds, problem, gossip, config


def run_solve(opts: dict, out_dir=None):
    """Solve one run spec; write outputs into ``out_dir`` when given."""
    ds, problem, gossip, config = build_run(opts)
    trace_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        trace_path = out_dir / "trace.jsonl"
    t0 = time.perf_counter()
    result = solve(problem, gossip, config, trace_path=trace_path)
    elapsed = time.perf_counter() - t0
    if out_dir is not None:
        np.savetxt(out_dir / "solution.txt", result.x_bar, fmt="%.17g")
        summary = dict(result.summary, config=config_to_dict(config), data=ds.provenance,
                       topology=opts["topology"], seed=opts["seed"])
        (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        (out_dir / "timing.json").write_text(json.dumps({"wall_time_s": elapsed}) + "\n")
    return result, elapsed


def _add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--family", choices=FAMILIES)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--data", help="svmlight file (or .csv with the label last)")
    src.add_argument("--gen", nargs="+", metavar="KEY=VAL", help="generate data, e.g. n=20 S=200")
    p.add_argument("--zscore", action="store_true", default=None, help="standardize features")
    p.add_argument("--gamma", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("--C", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--topology", help="complete, ring, path, grid or er:p")
    p.add_argument("--solver", choices=INNER_SOLVERS)
    p.add_argument("--sigma0", type=float)
    p.add_argument("--sigma-growth", type=float)
    p.add_argument("--criterion", choices=CRITERIA)
    p.add_argument("--dual-update", choices=DUAL_MODES)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-outer", type=int)
    p.add_argument("--seed", type=int)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dssnal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run one instance")
    _add_run_flags(p)
    p.add_argument("--out", help="directory for trace.jsonl, solution.txt, summary.json, timing.json")

    p = sub.add_parser("gen-data", help="write a generated dataset in svmlight format")
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--gen", nargs="+", required=True, metavar="KEY=VAL")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("validate-gossip", help="check the gossip matrix of a topology")
    p.add_argument("--topology", required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("bench", help="solve a list of run specs and write a CSV table")
    p.add_argument("specs", help="file with one run spec per line, written as solve flags")
    p.add_argument("--out", required=True, help="CSV path")
    return parser


def cmd_solve(args):
    opts = resolve_options(args)
    result, elapsed = run_solve(opts, opts["out"])
    s = result.summary
    print(f"converged={s['converged']} R_KKT={s['R_KKT']:.3e} iter={s['iter']} "
          f"obj={s['objective']:.10g} rounds={s['total_rounds']} time={elapsed:.2f}s")
    return 0


def cmd_gen_data(args):
    g = parse_gen(args.gen)
    gen = datamod.gen_random_regression if args.family == "huber" else datamod.gen_random_classification
    ds = gen(g["n"], g["S"], seed=args.seed)
    datamod.write_svmlight(ds, args.out)
    print(f"wrote {ds.S} samples, {ds.n} features to {args.out}")
    return 0


def cmd_validate_gossip(args):
    graph = make_graph(args.topology, args.m, seed=args.seed)
    gossip = build_gossip(args.topology, args.m, seed=args.seed)
    report = validate_gossip(gossip, graph)
    for line in report.lines():
        print(line)
    print(f"lambda_max = {gossip.lambda_max:.6g}")
    return 0 if report.ok else 1


def cmd_bench(args):
    solve_parser = argparse.ArgumentParser(prog="bench-spec", add_help=False)
    _add_run_flags(solve_parser)
    rows = []
    with open(args.specs) as fh:
        lines = [ln.split("#", 1)[0].strip() for ln in fh]
    for line in filter(None, lines):
        try:
            spec_args = solve_parser.parse_args(shlex.split(line))
        except SystemExit:
            raise UsageError(f"bad run spec: {line}") from None
        opts = resolve_options(spec_args)
        result, elapsed = run_solve(opts)
        s = result.summary
        rows.append({"family": opts["family"], "solver": opts["solver"], "R_KKT": f"{s['R_KKT']:.3e}",
                     "time": f"{elapsed:.3f}", "iter": s["iter"], "obj": f"{s['objective']:.10g}",
                     "m": s["m"], "n": s["n"], "S": s["S"]})
        log.info("bench: %s -> %s", line, rows[-1])
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def main(argv=None) -> int:
    configure_logging()
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "solve":
            return cmd_solve(args)
        if args.command == "gen-data":
            return cmd_gen_data(args)
        if args.command == "validate-gossip":
            return cmd_validate_gossip(args)
        return cmd_bench(args)
    except (UsageError, TopologyError, datamod.ParseError, datamod.EmptyDatasetError, ValueError) as exc:
        parser.error(str(exc))  # exits with status 2


if __name__ == "__main__":
    sys.exit(main())
