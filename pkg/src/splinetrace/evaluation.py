"""
Accuracy and timing experiments: fitting error per time step, held-out
tracing error of both tracers, and the control-point-count timing table.
"""
from __future__ import annotations

import csv
import gc
import json
import statistics
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .bspline import DEFAULT_ORDER, KnotPlacementConfig, ParamKind, fit_all, parameterize
from .neighbors import DEFAULT_K, DEFAULT_POWER
from .tracer_particle import Direction, TraceSeed, trace_particles
from .tracer_spline import sample_traced, trace_splines


class EvalError(ValueError):
    pass


@dataclass
class FitEvaluation:
    rmse_by_step: np.ndarray
    rmse: float
    percent_of_range: float  # relative to the bounding-box diagonal


@dataclass
class EvalReport:
    fit_rmse_by_step: np.ndarray
    trace_rmse_by_step: dict  # method -> {seed step -> (m,) array, NaN where untraced}
    timing: dict
    config_echo: dict
    knot_repair_count: int = 0
    seed_deviation_stats: dict = field(default_factory=dict)
    aggregate_rmse: dict = field(default_factory=dict)

    def to_dict(self):
        def arr(a):
            return [None if not np.isfinite(v) else float(v) for v in np.asarray(a)]

        return {
            "config": self.config_echo,
            "fit_rmse_by_step": arr(self.fit_rmse_by_step),
            "trace_rmse_by_step": {meth: {str(s): arr(v) for s, v in per.items()}
                                   for meth, per in self.trace_rmse_by_step.items()},
            "aggregate_rmse": self.aggregate_rmse,
            "timing": self.timing,
            "knot_repair_count": self.knot_repair_count,
            "seed_deviation_stats": self.seed_deviation_stats,
        }

    def write_json(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    def write_csv(self, directory):
        """``fit_rmse.csv`` and ``trace_rmse.csv`` in long format for external plotting."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        with open(d / "fit_rmse.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "rmse"])
            for j, v in enumerate(self.fit_rmse_by_step):
                w.writerow([j, repr(float(v))])
        with open(d / "trace_rmse.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "seed_step", "step", "rmse"])
            for meth, per in self.trace_rmse_by_step.items():
                for s, series in per.items():
                    for j, v in enumerate(series):
                        if np.isfinite(v):
                            w.writerow([meth, s, j, repr(float(v))])


def eval_fitting(pathlines, splines):
    """RMSE of the fitted curves against the data at every time step.

    Curves are evaluated at their own fitting parameters; for space-time
    curves only the three spatial coordinates count.
    """
    if len(splines) != pathlines.num_pathlines:
        raise EvalError(f"{len(splines)} curves for {pathlines.num_pathlines} pathlines")
    times = pathlines.time_of_step
    m = pathlines.num_timesteps
    sq = np.empty((pathlines.num_pathlines, m))
    kind = splines.param_kind
    for i, (curve, line) in enumerate(zip(splines.curves, pathlines.positions)):
        u, _ = parameterize(line, kind, times)
        fitted = _kernels.evaluate(curve.knots, curve.control_points, curve.order, u)
        sq[i] = np.sum((fitted[:, :3] - line) ** 2, axis=1)
    by_step = np.sqrt(sq.mean(axis=0))
    rmse = float(np.sqrt(sq.mean()))
    diag = pathlines.diameter
    return FitEvaluation(by_step, rmse, 100.0 * rmse / diag if diag > 0 else 0.0)


def split_train_test(num_pathlines, test_fraction, split_seed=0):
    """Disjoint sorted (train, test) index arrays, deterministic in ``split_seed``."""
    if not 0.0 < test_fraction < 1.0:
        raise EvalError("test_fraction must be in (0, 1)")
    n_test = max(1, int(round(test_fraction * num_pathlines)))
    perm = np.random.default_rng(split_seed).permutation(num_pathlines)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def resolve_seed_steps(spec, num_timesteps):
    """Step indices from ``"0,half"`` or a sequence; ``half``/``mid``/``last`` are named steps."""
    named = {"half": num_timesteps // 2, "mid": num_timesteps // 2, "last": num_timesteps - 1}
    tokens = spec.split(",") if isinstance(spec, str) else spec
    out = []
    for tok in tokens:
        tok = tok.strip() if isinstance(tok, str) else tok
        try:
            step = named[tok] if tok in named else int(tok)
        except (TypeError, ValueError):
            raise EvalError(f"bad seed step {tok!r}") from None
        if not 0 <= step < num_timesteps:
            raise EvalError(f"seed step {step} outside [0, {num_timesteps - 1}]")
        out.append(step)
    return out


def _seed_errors(truth, traced_steps, traced_pos, m):
    err = np.full(m, np.nan)
    err[traced_steps] = np.linalg.norm(traced_pos - truth[traced_steps], axis=1)
    return err


def _rmse_series(errs):
    errs = np.asarray(errs)
    out = np.full(errs.shape[1], np.nan)
    have = np.any(np.isfinite(errs), axis=0)
    out[have] = np.sqrt(np.nanmean(errs[:, have] ** 2, axis=0))
    return out


def _warm_up(train, splines, K, power):
    seed = [TraceSeed(0, train.positions[0, 0], Direction.FORWARD)]
    trace_particles(train.subset(np.arange(min(len(train.positions), K + 1))), seed, K, power)
    trace_splines(splines.subset(range(min(len(splines), K + 1))), seed, K, power)


def eval_tracing(pathlines, splines, test_fraction=0.25, seed_steps=(0, "half"), K=DEFAULT_K,
                 power=DEFAULT_POWER, split_seed=0, config=None):
    """Hold out a fraction of pathlines and trace them with both methods.

    Held-out trajectories are removed from both the particle set and the
    spline set; their positions at each seed step become seeds traced in
    both directions, and the per-step RMSE against the held-out truth is
    recorded per method and seed step.
    """
    m = pathlines.num_timesteps
    if len(splines) != pathlines.num_pathlines:
        raise EvalError(f"{len(splines)} curves for {pathlines.num_pathlines} pathlines")
    train_idx, test_idx = split_train_test(pathlines.num_pathlines, test_fraction, split_seed)
    if len(train_idx) < K + 1:
        raise EvalError(f"only {len(train_idx)} training curves for K={K} neighbors")
    train = pathlines.subset(train_idx)
    train_splines = splines.subset(train_idx)
    steps = resolve_seed_steps(seed_steps, m)
    uparams = pathlines.normalized_times()
    truth = pathlines.positions

    _warm_up(train, train_splines, K, power)
    rmse = {"particle": {}, "spline": {}}
    agg_sq = {"particle": [], "spline": []}
    timing = {"particle_trace_time": 0.0, "spline_trace_time": 0.0}
    p_iters, s_iters, s_ctrl, repairs, deviations = [], [], [], 0, []
    for step in steps:
        seeds = [TraceSeed(step, truth[i, step], Direction.BOTH) for i in test_idx]

        t0 = time.perf_counter()
        traced_p = trace_particles(train, seeds, K, power)
        timing["particle_trace_time"] += time.perf_counter() - t0
        t0 = time.perf_counter()
        traced_s = trace_splines(train_splines, seeds, K, power)
        timing["spline_trace_time"] += time.perf_counter() - t0

        errs_p = [_seed_errors(truth[i], tp.steps, tp.positions, m) for i, tp in zip(test_idx, traced_p)]
        errs_s = []
        for i, ts in zip(test_idx, traced_s):
            smp = sample_traced(ts, uparams)
            errs_s.append(_seed_errors(truth[i], smp.steps, smp.positions, m))
            deviations.append(float(np.linalg.norm(ts.evaluate(ts.seed_param) - ts.seed.rho)))
            repairs += ts.knot_repairs
            s_iters.append(ts.iterations)
            s_ctrl.append(ts.num_control_points)
        p_iters.extend(tp.iterations for tp in traced_p)
        rmse["particle"][step] = _rmse_series(errs_p)
        rmse["spline"][step] = _rmse_series(errs_s)
        agg_sq["particle"].extend(e[np.isfinite(e)] ** 2 for e in errs_p)
        agg_sq["spline"].extend(e[np.isfinite(e)] ** 2 for e in errs_s)

    timing["fit_time"] = float(splines.fit_time)
    timing["iteration_counts"] = {
        "particle_mean": float(np.mean(p_iters)),
        "spline_mean": float(np.mean(s_iters)),
        "spline_control_points_mean": float(np.mean(s_ctrl)),
    }
    dev = np.array(deviations)
    echo = {"test_fraction": test_fraction, "seed_steps": steps, "K": K, "power": power,
            "split_seed": split_seed, "num_pathlines": pathlines.num_pathlines,
            "num_timesteps": m, "num_test": len(test_idx), "order": splines.order,
            "control_points": int(splines.curves[0].n), "backend": _kernels.backend()}
    echo.update(config or {})
    return EvalReport(
        fit_rmse_by_step=eval_fitting(pathlines, splines).rmse_by_step,
        trace_rmse_by_step=rmse,
        timing=timing,
        config_echo=echo,
        knot_repair_count=int(repairs),
        seed_deviation_stats={"mean": float(dev.mean()), "max": float(dev.max()),
                              "rms": float(np.sqrt(np.mean(dev ** 2)))},
        aggregate_rmse={meth: float(np.sqrt(np.mean(np.concatenate(v)))) for meth, v in agg_sq.items()},
    )


@dataclass
class BenchRow:
    control_points: int
    fit_time: float
    spline_trace_time: float
    ratio: float
    spline_iterations: float


@dataclass
class BenchTable:
    rows: list
    particle_trace_time: float
    particle_iterations: float
    slope: float
    intercept: float
    r_squared: float
    fit_time_variation: float
    config_echo: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["config"] = d.pop("config_echo")
        return d

    def write_json(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def linear_fit(x, y):
    """Least-squares line through ``(x, y)``: ``(slope, intercept, R^2)``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def bench_timing(pathlines, control_point_counts, seeds, K=DEFAULT_K, power=DEFAULT_POWER,
                 repetitions=3, k=DEFAULT_ORDER, config=None):
    """Fit and trace timings per control-point count against the particle baseline.

    Every stage runs once untimed as a warm-up, then ``repetitions`` timed
    rounds visit all stages in turn, so a burst of machine load spreads over
    all counts instead of skewing one. The garbage collector is paused inside
    each measurement. Each timing is the median over rounds;
    ``ratio`` is spline-trace time over particle-trace time for the same seeds.
    """
    counts = [int(c) for c in control_point_counts]
    if len(counts) < 2:
        raise EvalError("need at least two control-point counts")
    repetitions = max(3, int(repetitions))

    def timed(fn):
        # like timeit: no cyclic GC pauses inside the measurement
        gc.collect()
        gc.disable()
        try:
            t0 = time.perf_counter()
            result = fn()
            return time.perf_counter() - t0, result
        finally:
            gc.enable()

    def particle():
        return trace_particles(pathlines, seeds, K, power)

    def fit(n):
        return fit_all(pathlines, k, KnotPlacementConfig(n), ParamKind.TIME)

    traced_p = particle()
    splines = {n: fit(n) for n in counts}
    traced_s = {n: trace_splines(splines[n], seeds, K, power) for n in counts}
    samples = {"particle": [], **{("fit", n): [] for n in counts}, **{("trace", n): [] for n in counts}}
    for _ in range(repetitions):
        samples["particle"].append(timed(particle)[0])
        for n in counts:
            samples["fit", n].append(timed(lambda: fit(n))[0])
            samples["trace", n].append(timed(lambda: trace_splines(splines[n], seeds, K, power))[0])
    med = {key: statistics.median(v) for key, v in samples.items()}

    particle_time = med["particle"]
    rows = [BenchRow(n, med["fit", n], med["trace", n], med["trace", n] / particle_time,
                     float(np.mean([t.iterations for t in traced_s[n]]))) for n in counts]
    slope, intercept, r2 = linear_fit(counts, [r.spline_trace_time for r in rows])
    fits = [r.fit_time for r in rows]
    echo = {"control_point_counts": counts, "K": K, "power": power, "repetitions": repetitions,
            "order": k, "num_seeds": len(seeds), "num_pathlines": pathlines.num_pathlines,
            "num_timesteps": pathlines.num_timesteps, "backend": _kernels.backend()}
    echo.update(config or {})
    return BenchTable(rows, particle_time, float(np.mean([t.iterations for t in traced_p])),
                      slope, intercept, r2, max(fits) / min(fits) - 1.0, echo)


__all__ = ["EvalError", "EvalReport", "FitEvaluation", "BenchRow", "BenchTable", "eval_fitting",
           "eval_tracing", "bench_timing", "split_train_test", "resolve_seed_steps", "linear_fit"]
