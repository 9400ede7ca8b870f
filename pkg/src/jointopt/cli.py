"""Command line entry point: validate, run, sweep and oracle verbs."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import emit, parse_config
from .engine import Engine, RunMode, RunTrace
from .errors import ConfigError, ConvergenceFailure, JointOptError, OracleFailure, RunError
from .metrics import TRACE_COLUMNS
from .problem import compute_constants, solve_reference

log = logging.getLogger("jointopt")

OUT_ENV = "JOINTOPT_OUT"
METRICS = ("consensus_gap", "theta_error", "lyapunov", "opt_gap", "x_error")

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_trace(records, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for rec in records:
            writer.writerow([_fmt(getattr(rec, col)) for col in TRACE_COLUMNS])


def read_trace(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def manifest(cfg, engine: Engine) -> dict:
    ref = engine.reference
    return {
        "tool": "jointopt",
        "version": __version__,
        "seed": cfg.seed,
        "config": emit(cfg),
        "constants": engine.constants.as_dict(),
        "reference": {"x_star": ref.x_star.tolist(), "theta_star": ref.theta_star.tolist(),
                      "f_star": ref.f_star, "tol": ref.tol},
        # with a singular aggregate Hessian the solution set may not be a point,
        # so only opt_gap is a meaningful convergence measure
        "aggregate_singular": bool(ref.singular),
    }


def _overrides(cfg, mode=None, audit=False, seed=None, iterations=None):
    changes = {}
    if mode is not None:
        changes["mode"] = RunMode(mode, cfg.mode.learn_iters)
    if audit:
        changes["audit"] = True
    if seed is not None:
        changes["seed"] = seed
    if iterations is not None:
        changes["iterations"] = iterations
    if changes:
        cfg = cfg.replace(**changes)
        cfg.validate()
    return cfg


def execute(cfg, out_dir, reference=None) -> RunTrace:
    """Run one configuration and write manifest, trace and summary into ``out_dir``.

    On failure the partial trace is flushed before the error propagates.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    engine = Engine(cfg, reference)
    _write_json(out / "manifest.json", manifest(cfg, engine))
    try:
        trace = engine.run()
    except RunError as exc:
        if exc.trace is not None:
            write_trace(exc.trace.records, out / "trace.csv")
        _write_json(out / "summary.json", {"error": type(exc.cause).__name__,
                                           "message": str(exc)})
        raise
    write_trace(trace.records, out / "trace.csv")
    _write_json(out / "summary.json", trace.summary)
    return trace


def _exit_code(exc: Exception) -> int:
    cause = exc.cause if isinstance(exc, RunError) else exc
    if isinstance(cause, ConfigError):
        return EXIT_CONFIG
    if isinstance(cause, (OracleFailure, ConvergenceFailure)):
        return EXIT_NUMERIC
    return EXIT_ERROR


def _default_out(config_path) -> Path:
    base = Path(os.environ.get(OUT_ENV, "runs"))
    return base / Path(config_path).stem


def run_command(config_path, mode=None, out_dir=None, audit=False, seed=None) -> int:
    try:
        cfg = _overrides(parse_config(config_path), mode, audit, seed)
        execute(cfg, out_dir or _default_out(config_path))
    except JointOptError as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return _exit_code(exc)
    return EXIT_OK


def _sweep_worker(args):
    config_path, mode, audit, seed, out_dir = args
    cfg = _overrides(parse_config(config_path), mode, audit, seed)
    trace = execute(cfg, out_dir)
    return seed, [(r.k, [getattr(r, m) for m in METRICS]) for r in trace.records]


def aggregate(results) -> tuple[list, dict]:
    """Mean and max across seeds of every metric at each traced ``k``."""
    ks = [k for k, _ in results[0][1]]
    values = np.array([[vals for _, vals in recs] for _, recs in results])  # seeds, rows, metrics
    rows = []
    for j, k in enumerate(ks):
        row = {"k": k}
        for i, name in enumerate(METRICS):
            row[f"{name}_mean"] = float(values[:, j, i].mean())
            row[f"{name}_max"] = float(values[:, j, i].max())
        rows.append(row)
    final = {"seeds": [s for s, _ in results], "final_k": ks[-1]}
    for i, name in enumerate(METRICS):
        final[f"{name}_mean"] = float(values[:, -1, i].mean())
        final[f"{name}_max"] = float(values[:, -1, i].max())
    return rows, final


def sweep_command(config_path, seeds: int, mode=None, out_dir=None, audit=False,
                  workers: int | None = None) -> int:
    try:
        base = parse_config(config_path)
        out = Path(out_dir or _default_out(config_path))
        jobs = [(str(config_path), mode, audit, base.seed + i, out / f"seed_{base.seed + i}")
                for i in range(seeds)]
        workers = workers or min(seeds, os.cpu_count() or 1)
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                results = list(pool.map(_sweep_worker, jobs))
        else:
            results = [_sweep_worker(j) for j in jobs]
    except JointOptError as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return _exit_code(exc)
    rows, final = aggregate(results)
    with open(out / "aggregate.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})
    _write_json(out / "summary.json", final)
    return EXIT_OK


def validate_command(config_path) -> int:
    try:
        cfg = parse_config(config_path)
        ref = solve_reference(cfg.problem, cfg.sets, cfg.learning, cfg.oracle_tol)
        consts = compute_constants(cfg.problem, cfg.sets, cfg.learning, cfg.x_noise,
                                   cfg.theta_noise, ref.theta_star)
    except JointOptError as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return _exit_code(exc)
    print(json.dumps({"valid": True, "m": cfg.m, "n": cfg.n, "p": cfg.p,
                      "constants": consts.as_dict()}, indent=2))
    return EXIT_OK


def oracle_command(config_path) -> int:
    try:
        cfg = parse_config(config_path)
        ref = solve_reference(cfg.problem, cfg.sets, cfg.learning, cfg.oracle_tol)
    except JointOptError as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return _exit_code(exc)
    print(json.dumps({"x_star": ref.x_star.tolist(), "theta_star": ref.theta_star.tolist(),
                      "f_star": ref.f_star, "aggregate_singular": bool(ref.singular)}, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jointopt", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("validate", help="check a config and print the problem constants")
    p.add_argument("config")

    p = sub.add_parser("run", help="run one simulation")
    p.add_argument("config")
    p.add_argument("--mode", choices=["misspecified_stochastic", "deterministic",
                                      "correctly_specified", "sequential_baseline"])
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<config name>)")
    p.add_argument("--audit", action="store_true", help="run the iterate-relation checks")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("sweep", help="run several master seeds and aggregate")
    p.add_argument("config")
    p.add_argument("--seeds", type=int, required=True)
    p.add_argument("--mode")
    p.add_argument("--out")
    p.add_argument("--audit", action="store_true")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("oracle", help="print the reference solution")
    p.add_argument("config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.verb == "validate":
        return validate_command(args.config)
    if args.verb == "run":
        return run_command(args.config, args.mode, args.out, args.audit, args.seed)
    if args.verb == "sweep":
        return sweep_command(args.config, args.seeds, args.mode, args.out, args.audit,
                             args.workers)
    return oracle_command(args.config)


if __name__ == "__main__":
    sys.exit(main())
