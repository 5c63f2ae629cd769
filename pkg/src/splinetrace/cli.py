"""
Command line entry point: ``splinetrace {gen,fit,trace,eval,bench,info}``.

Exit codes: 0 success, 1 usage error, 2 data error. Every artifact gets a
``<file>.meta.json`` sidecar (or an embedded ``config`` block for JSON
reports) echoing the command that produced it.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .bspline import (KnotPlacementConfig, ParamKind, SplineCurve, SplineError, SplineSet, fit_all, read_splines,
                      write_splines)
from .evaluation import (EvalError, bench_timing, eval_fitting, eval_tracing, resolve_seed_steps,
                         split_train_test)
from .flowdata import (FlowDataError, FlowFieldSpec, FlowKind, generate_pathlines, read_pathlines,
                       read_pln_header, write_pathlines)
from .neighbors import NeighborError
from .tracer_particle import Direction, TraceError, TraceSeed, trace_particles
from .tracer_spline import sample_traced, trace_splines

log = logging.getLogger("splinetrace")

DATA_ERRORS = (FlowDataError, SplineError, TraceError, NeighborError, EvalError, OSError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _seed(text):
    try:
        tau, x, y, z = text.split(",")
        return int(tau), (float(x), float(y), float(z))
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be tau,x,y,z, got {text!r}") from None


def build_parser():
    p = _Parser(prog="splinetrace", description="B-spline control-point pathline tracing toolkit")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker threads for fitting (default: available CPUs)")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    p.add_argument("--backend", choices=["numba", "numpy"], default=None,
                   help="kernel backend (default: numba unless SPLINETRACE_DISABLE_NUMBA is set)")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen", help="integrate synthetic pathlines")
    g.add_argument("--flow", choices=[f.value for f in FlowKind], default="double-gyre")
    g.add_argument("--pathlines", type=int, required=True)
    g.add_argument("--steps", type=int, required=True)
    g.add_argument("--substeps", type=int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--t0", type=float, default=None)
    g.add_argument("--t1", type=float, default=None)
    g.add_argument("--velocity", type=float, nargs=3, default=(1.0, 0.0, 0.0), help="uniform flow only")
    g.add_argument("--format", choices=["binary", "csv"], default=None)
    g.add_argument("--out", required=True)

    f = sub.add_parser("fit", help="fit B-splines to every pathline")
    f.add_argument("--in", dest="input", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--control-points", type=int, required=True)
    f.add_argument("--order", type=int, default=4)
    f.add_argument("--param", choices=[k.value for k in ParamKind], default="time")
    f.add_argument("--smoothing", type=int, default=2, help="feature moving-average half width")

    t = sub.add_parser("trace", help="trace new pathlines from seeds")
    t.add_argument("--method", choices=["particle", "spline"], required=True)
    t.add_argument("--in", dest="input", required=True)
    t.add_argument("--seed", type=_seed, action="append", required=True, help="tau,x,y,z (repeatable)")
    t.add_argument("--neighbors", type=int, default=8)
    t.add_argument("--power", type=float, default=2.0)
    t.add_argument("--direction", choices=[d.value for d in Direction], default="both")
    t.add_argument("--out", required=True)
    t.add_argument("--samples-out", default=None, help="spline method: per-step positions as CSV")

    e = sub.add_parser("eval", help="held-out accuracy of both tracers")
    e.add_argument("--pathlines", required=True)
    e.add_argument("--splines", required=True)
    e.add_argument("--test-frac", type=float, default=0.25)
    e.add_argument("--seed-steps", default="0,half")
    e.add_argument("--neighbors", type=int, default=8)
    e.add_argument("--power", type=float, default=2.0)
    e.add_argument("--split-seed", type=int, default=0)
    e.add_argument("--report", required=True)
    e.add_argument("--csv", default=None, help="directory for plot-ready CSV series")

    b = sub.add_parser("bench", help="fit/trace timing per control-point count")
    b.add_argument("--pathlines", required=True)
    b.add_argument("--cp", type=_int_list, default=[10, 25, 50, 100])
    b.add_argument("--test-frac", type=float, default=0.25)
    b.add_argument("--seed-steps", default="0,half")
    b.add_argument("--neighbors", type=int, default=8)
    b.add_argument("--power", type=float, default=2.0)
    b.add_argument("--reps", type=int, default=3)
    b.add_argument("--split-seed", type=int, default=0)
    b.add_argument("--report", required=True)

    i = sub.add_parser("info", help="describe a PLN1 or SPL1 file")
    i.add_argument("file")
    return p


def _echo(args):
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    return json.loads(json.dumps(cfg, default=str))


def _write_meta(path, args):
    meta = {"producer": f"splinetrace {__version__}", "config": _echo(args)}
    Path(f"{path}.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def _flow_spec(args):
    kind = FlowKind(args.flow)
    span = {}
    if args.t0 is not None or args.t1 is not None:
        base = {FlowKind.DOUBLE_GYRE: FlowFieldSpec.double_gyre, FlowKind.ABC: FlowFieldSpec.abc,
                FlowKind.UNIFORM: FlowFieldSpec.uniform}[kind]().time_span
        span["time_span"] = (base[0] if args.t0 is None else args.t0, base[1] if args.t1 is None else args.t1)
    if kind is FlowKind.DOUBLE_GYRE:
        return FlowFieldSpec.double_gyre(**span)
    if kind is FlowKind.ABC:
        return FlowFieldSpec.abc(**span)
    return FlowFieldSpec.uniform(tuple(args.velocity), **span)


def cmd_gen(args):
    data = generate_pathlines(_flow_spec(args), args.pathlines, args.steps, args.substeps, args.seed)
    write_pathlines(data, args.out, args.format)
    _write_meta(args.out, args)
    if data.clamped.any():
        log.warning("%d pathlines were clamped to the domain boundary", int(data.clamped.sum()))
    print(f"wrote {data.num_pathlines} pathlines x {data.num_timesteps} steps to {args.out}")


def cmd_fit(args):
    data = read_pathlines(args.input)
    cfg = KnotPlacementConfig(args.control_points, args.smoothing)
    splines = fit_all(data, args.order, cfg, ParamKind(args.param), threads=args.threads)
    write_splines(splines, args.out)
    _write_meta(args.out, args)
    ev = eval_fitting(data, splines)
    print(f"fitted {len(splines)} curves (n={args.control_points}, k={args.order}) in "
          f"{splines.fit_time:.3f}s; RMSE {ev.rmse:.3e} ({ev.percent_of_range:.2e}% of range)")


def _write_trace_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pathline_id", "step", "x", "y", "z"])
        for pid, steps, pos in rows:
            for s, (x, y, z) in zip(steps, pos):
                w.writerow([pid, int(s), repr(float(x)), repr(float(y)), repr(float(z))])


def cmd_trace(args):
    seeds = [TraceSeed(tau, rho, Direction(args.direction)) for tau, rho in args.seed]
    if args.method == "particle":
        data = read_pathlines(args.input)
        traced = trace_particles(data, seeds, args.neighbors, args.power)
        _write_trace_csv(args.out, [(i, t.steps, t.positions) for i, t in enumerate(traced)])
        _write_meta(args.out, args)
        print(f"traced {len(traced)} pathlines ({sum(t.iterations for t in traced)} particle iterations)")
        return
    splines = read_splines(args.input)
    traced = trace_splines(splines, seeds, args.neighbors, args.power)
    write_splines(_as_spline_set(traced, splines), args.out)
    _write_meta(args.out, args)
    if args.samples_out:
        uparams = (splines.time_of_step - splines.time_of_step[0]) / np.ptp(splines.time_of_step)
        rows = []
        for i, t in enumerate(traced):
            smp = sample_traced(t, uparams)
            rows.append((i, smp.steps, smp.positions))
        _write_trace_csv(args.samples_out, rows)
        _write_meta(args.samples_out, args)
    print(f"traced {len(traced)} splines ({sum(t.iterations for t in traced)} control-point iterations)")


def _as_spline_set(traced, source):
    curves = [SplineCurve(t.order, t.control_points, t.knots) for t in traced]
    return SplineSet(curves, source.time_of_step)


def cmd_eval(args):
    data = read_pathlines(args.pathlines)
    splines = read_splines(args.splines)
    if splines.time_of_step is None:
        splines.time_of_step = data.time_of_step
    report = eval_tracing(data, splines, args.test_frac, args.seed_steps, args.neighbors, args.power,
                          args.split_seed, config={"cli": _echo(args)})
    report.write_json(args.report)
    if args.csv:
        report.write_csv(args.csv)
    agg = report.aggregate_rmse
    print(f"aggregate RMSE particle {agg['particle']:.4e} spline {agg['spline']:.4e}; "
          f"trace time particle {report.timing['particle_trace_time']:.3f}s "
          f"spline {report.timing['spline_trace_time']:.3f}s")


def cmd_bench(args):
    data = read_pathlines(args.pathlines)
    train_idx, test_idx = split_train_test(data.num_pathlines, args.test_frac, args.split_seed)
    train = data.subset(train_idx)
    seeds = [TraceSeed(s, data.positions[i, s], Direction.BOTH)
             for s in resolve_seed_steps(args.seed_steps, data.num_timesteps) for i in test_idx]
    table = bench_timing(train, args.cp, seeds, args.neighbors, args.power, args.reps,
                         config={"cli": _echo(args)})
    table.write_json(args.report)
    print(f"{'n':>6} {'fit [s]':>10} {'trace [s]':>10} {'ratio':>8}")
    for r in table.rows:
        print(f"{r.control_points:>6} {r.fit_time:>10.3f} {r.spline_trace_time:>10.3f} {r.ratio:>8.3f}")
    print(f"{'base':>6} {'-':>10} {table.particle_trace_time:>10.3f} {1.0:>8.3f}")
    print(f"trace time vs n: slope {table.slope:.3e} s/cp, R^2 {table.r_squared:.3f}; "
          f"fit time variation {100 * table.fit_time_variation:.1f}%")


def cmd_info(args):
    path = Path(args.file)
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == b"PLN1":
        npl, nst, _ = read_pln_header(path)
        data = read_pathlines(path, "binary")
        lo, hi = data.bounds
        print("format: PLN1")
        print(f"num_pathlines: {npl}")
        print(f"num_timesteps: {nst}")
    elif magic == b"SPL1":
        splines = read_splines(path)
        pts = np.concatenate([c.control_points[:, :3] for c in splines.curves])
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        ns = [c.n for c in splines.curves]
        print("format: SPL1")
        print(f"num_curves: {len(splines)}")
        print(f"order: {splines.order}")
        print(f"dim: {splines.dim}")
        print(f"control_points: min {min(ns)} max {max(ns)}")
        if splines.time_of_step is not None:
            print(f"num_timesteps: {len(splines.time_of_step)}")
    else:
        raise FlowDataError(f"{path}: unrecognized file magic {magic!r}")
    print(f"bounds: min {lo.tolist()} max {hi.tolist()}")


COMMANDS = {"gen": cmd_gen, "fit": cmd_fit, "trace": cmd_trace, "eval": cmd_eval,
            "bench": cmd_bench, "info": cmd_info}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    if args.command is None:
        parser.print_help(sys.stderr)
        return 1
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    if args.backend:
        _kernels.set_backend(args.backend)
    try:
        COMMANDS[args.command](args)
    except DATA_ERRORS as exc:
        where = "io" if isinstance(exc, OSError) else type(exc).__module__.rsplit(".", 1)[-1]
        print(f"error [{where}]: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
