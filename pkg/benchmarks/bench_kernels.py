"""
Numba kernels vs the pure-numpy fallback.

Times every hot kernel and the end-to-end fit/trace stages on both backends
(after a JIT warm-up), checks that the two agree and prints a table:

    python3 benchmarks/bench_kernels.py [--pathlines 400] [--steps 400] [--reps 5]
"""
import argparse
import statistics
import time

import numpy as np

from splinetrace import _kernels
from splinetrace.bspline import KnotPlacementConfig, fit_all
from splinetrace.flowdata import FlowFieldSpec, generate_pathlines
from splinetrace.tracer_particle import TraceSeed, trace_particles
from splinetrace.tracer_spline import trace_splines


def median_time(fn, reps):
    fn()  # warm-up (JIT compile, caches)
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def cases(args):
    rng = np.random.default_rng(0)
    data = generate_pathlines(FlowFieldSpec.double_gyre(), args.pathlines, args.steps, substeps=5, seed=2)
    splines = fit_all(data, 4, KnotPlacementConfig(args.control_points))
    knots, ctrl, ns = splines.packed()
    curve = splines.curves[0]
    u = np.sort(rng.random(args.steps * 50))
    spans, vals = _kernels.collocation(curve.knots, 4, u)
    y = rng.normal(size=(len(u), 3))
    points = rng.random((args.pathlines * 20, 3))
    owners = np.arange(len(points))
    queries = rng.random((2000, 3))
    train = data.subset(range(20, args.pathlines))
    seeds = [TraceSeed(args.steps // 2, data.positions[i, args.steps // 2]) for i in range(20)]
    return {
        "collocation": lambda: _kernels.collocation(curve.knots, 4, u),
        "evaluate": lambda: _kernels.evaluate(curve.knots, curve.control_points, 4, u),
        "evaluate_curves": lambda: _kernels.evaluate_curves(knots, ctrl, ns, 4, 0.37),
        "normal_equations": lambda: _kernels.normal_equations(spans, vals, y, curve.n),
        "knn (K=8)": lambda: _kernels.knn(points, owners, queries, 8),
        "fit_all": lambda: fit_all(data, 4, KnotPlacementConfig(args.control_points)).packed()[1],
        "trace_particles": lambda: np.stack([t.positions for t in trace_particles(train, seeds)]),
        "trace_splines": lambda: np.concatenate(
            [t.control_points for t in trace_splines(splines.subset(range(20, args.pathlines)), seeds)]),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return a.shape == b.shape and np.allclose(a, b, rtol=1e-12, atol=1e-12)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    p.add_argument("--pathlines", type=int, default=400)
    p.add_argument("--steps", type=int, default=400)
    p.add_argument("--control-points", type=int, default=40)
    p.add_argument("--reps", type=int, default=5)
    args = p.parse_args()
    if not _kernels.HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    prev = _kernels.backend()
    try:
        timings, outputs = {}, {}
        for backend in ("numba", "numpy"):
            _kernels.set_backend(backend)
            for name, fn in cases(args).items():
                timings[backend, name] = median_time(fn, args.reps)
                outputs[backend, name] = fn()
    finally:
        _kernels.set_backend(prev)

    names = list(cases(args))
    print(f"{'stage':<18} {'numba [ms]':>11} {'numpy [ms]':>11} {'speed-up':>9}  match")
    for name in names:
        nb, npy = timings["numba", name], timings["numpy", name]
        match = same(outputs["numba", name], outputs["numpy", name])
        print(f"{name:<18} {1e3 * nb:>11.2f} {1e3 * npy:>11.2f} {npy / nb:>8.1f}x  {match}")


if __name__ == "__main__":
    main()
