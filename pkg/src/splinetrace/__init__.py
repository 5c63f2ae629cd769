"""Pathline tracing through B-spline control points, with a per-step particle baseline."""
from .bspline import (KnotPlacementConfig, ParamKind, SplineCurve, SplineError, SplineSet, basis, evaluate,
                      fit_all, fit_curve, place_knots, read_splines, write_splines)
from .evaluation import EvalError, EvalReport, bench_timing, eval_fitting, eval_tracing
from .flowdata import (FlowDataError, FlowFieldSpec, FlowKind, PathlineSet, generate_pathlines,
                       read_pathlines, write_pathlines)
from .neighbors import NeighborError, NeighborIndex, build_index, idw_weights, knn
from .tracer_particle import Direction, TraceError, TracedPathline, TraceSeed, trace_particle, trace_particles
from .tracer_spline import TracedSpline, sample_traced, trace_spline, trace_splines

__version__ = "0.1.0"

__all__ = [
    "Direction", "EvalError", "EvalReport", "FlowDataError", "FlowFieldSpec", "FlowKind",
    "KnotPlacementConfig", "NeighborError", "NeighborIndex", "ParamKind", "PathlineSet",
    "SplineCurve", "SplineError", "SplineSet", "TraceError", "TraceSeed", "TracedPathline",
    "TracedSpline", "basis", "bench_timing", "build_index", "eval_fitting", "eval_tracing",
    "evaluate", "fit_all", "fit_curve", "generate_pathlines", "idw_weights", "knn", "place_knots",
    "read_pathlines", "read_splines", "sample_traced", "trace_particle", "trace_particles",
    "trace_spline", "trace_splines", "write_pathlines", "write_splines",
]
