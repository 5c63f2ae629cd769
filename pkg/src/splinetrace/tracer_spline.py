"""
Pathline tracing in control-point space.

Instead of advancing an inserted particle once per output step, the knots
and control points of a new B-spline are reconstructed from the knots and
control points of neighboring fitted curves, so the number of interpolation
iterations follows the number of control points.

Each fitted curve pairs knot ``t_d`` with control point ``P_{d - k//2}`` for
anchor indices ``d`` in ``[k//2, n + k - 1 - ceil(k/2)]``. Tracing starts by
synchronizing all curves at the seed parameter ``u`` and then walks every
curve's anchor one index per iteration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .bspline import SplineCurve, SplineError
from .neighbors import DEFAULT_K, DEFAULT_POWER, SNAP_FRACTION, NeighborIndex, idw_weight_matrix
from .tracer_particle import TraceError, TraceSeed

KNOT_EPS = 1e-9


@dataclass
class TracedSpline:
    """Reconstructed curve of an inserted pathline.

    ``knots`` has ``len(control_points) + order`` entries, clamped at both
    ends of the traced parameter range ``[knots[0], knots[-1]]``.
    """

    knots: np.ndarray
    control_points: np.ndarray
    order: int
    seed: TraceSeed
    seed_param: float
    iterations: int = 0
    knot_repairs: int = 0
    raw_knots: np.ndarray = field(default=None, repr=False)

    @property
    def num_control_points(self):
        return len(self.control_points)

    @property
    def param_range(self):
        return float(self.knots[0]), float(self.knots[-1])

    def evaluate(self, u):
        lo, hi = self.param_range
        arr = np.atleast_1d(np.asarray(u, dtype=np.float64))
        if arr.size and (arr.min() < lo or arr.max() > hi):
            raise SplineError(f"parameter outside the traced range [{lo}, {hi}]")
        out = _kernels.evaluate(self.knots, self.control_points, self.order, arr)
        return out[0] if np.ndim(u) == 0 else out

    def to_curve(self):
        """As a :class:`SplineCurve` (only for traces spanning all of ``[0, 1]``)."""
        return SplineCurve(self.order, self.control_points, self.knots)


@dataclass
class TraceSamples:
    params: np.ndarray
    positions: np.ndarray
    steps: np.ndarray = None


def anchor_index(curve, u):
    """Smallest ``d`` in ``[k//2, n+k-1-ceil(k/2)]`` with ``t_d >= u``.

    ``u == 0`` maps to the lower end of the range and ``u == 1`` to the upper.
    """
    k = curve.order
    return int(_anchor_indices(curve.knots[None, :], np.array([curve.n]), k, u)[0])


def _anchor_indices(knots, ns, k, u):
    lo = k // 2
    hi = ns + k - 1 - math.ceil(k / 2)
    if u <= 0.0:
        return np.full(len(ns), lo, dtype=np.int64)
    if u >= 1.0:
        return hi.astype(np.int64)
    first = np.argmax(knots >= u, axis=1)  # padded knots are 1, so one always exists
    return np.clip(first, lo, hi).astype(np.int64)


def trace_spline(splines, seed, K=DEFAULT_K, power=DEFAULT_POWER):
    """Trace one seed; see :func:`trace_splines`."""
    return trace_splines(splines, [seed], K, power)[0]


def trace_splines(splines, seeds, K=DEFAULT_K, power=DEFAULT_POWER):
    """Reconstruct a B-spline for every seed from the curves of ``splines``.

    Seeds sharing a start step share the per-iteration neighbor indexes, since
    every curve's anchor frontier depends only on the start parameter.
    """
    if len(splines) == 0:
        raise TraceError("empty spline set")
    if splines.dim != 3:
        raise TraceError("control-point tracing needs time-parameterized 3D curves")
    if splines.time_of_step is None:
        raise TraceError("spline set has no time axis; cannot normalize seed steps")
    m = len(splines.time_of_step)
    for s in seeds:
        if not 0 <= s.tau < m:
            raise TraceError(f"seed step {s.tau} outside [0, {m - 1}]")
    params = np.array([splines.normalize_time(splines.time_of_step[s.tau]) for s in seeds])
    results = [None] * len(seeds)
    for u in np.unique(params):
        members = np.nonzero(params == u)[0]
        group = _trace_group(splines, [seeds[i] for i in members], float(u), K, power)
        for i, traced in zip(members, group):
            results[i] = traced
    return results


def _trace_group(splines, seeds, u, K, power):
    k = splines.order
    h = k // 2
    knots, ctrl, ns = splines.packed()
    c = len(ns)
    d0 = _anchor_indices(knots, ns, k, u)
    dlo = np.full(c, h, dtype=np.int64)
    dhi = ns + k - 1 - math.ceil(k / 2)
    rows = np.arange(c)
    rho = np.array([s.rho for s in seeds])
    diameter = _control_diameter(ctrl, ns)
    snap = SNAP_FRACTION * diameter

    # synchronize every curve at the seed parameter
    on_curve = _kernels.evaluate_curves(knots, ctrl, ns, k, u)
    owners, dist = NeighborIndex(on_curve).query(rho, K)
    w = idw_weight_matrix(dist, power, snap)
    t_seed = np.sum(w * knots[owners, d0[owners]], axis=1)
    p_seed = np.sum(w[:, :, None] * (ctrl[owners, d0[owners] - h] - on_curve[owners]), axis=1) + rho

    fwd_mask = np.array([s.direction.forward for s in seeds])
    bwd_mask = np.array([s.direction.backward for s in seeds])
    fwd = _walk(knots, ctrl, rows, d0, dhi, t_seed, p_seed, fwd_mask, +1, K, power, snap, h)
    bwd = _walk(knots, ctrl, rows, d0, dlo, t_seed, p_seed, bwd_mask, -1, K, power, snap, h)

    out = []
    for j, s in enumerate(seeds):
        bt, bp, bit = bwd[j]
        ft, fp, fit = fwd[j]
        tk = np.concatenate((bt[::-1], [t_seed[j]], ft))
        cp = np.concatenate((bp[::-1].reshape(-1, 3), p_seed[j][None, :], fp.reshape(-1, 3)))
        lo = 0.0 if s.direction.backward else u
        hi = 1.0 if s.direction.forward else u
        knots_full, cp, repairs = _assemble(tk, cp, k, lo, hi)
        # a one-sided trace is clamped at the seed, so its end there is the seed itself
        if not s.direction.backward:
            cp[0] = s.rho
        if not s.direction.forward:
            cp[-1] = s.rho
        out.append(TracedSpline(knots_full, cp, k, s, u, 1 + bit + fit, repairs, tk))
    return out


def _control_diameter(ctrl, ns):
    pts = np.concatenate([ctrl[i, :n] for i, n in enumerate(ns)])
    return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))


def _walk(knots, ctrl, rows, d0, dend, t_start, p_start, mask, step, K, power, snap, h):
    """Advance anchors by ``step`` per iteration until each seed leaves ``[0, 1]``
    or all of its neighbors have run out of anchors.

    Curves whose anchor reached ``dend`` stay frozen there and contribute a
    zero increment. Returns per seed ``(knots, control points, iterations)``.
    """
    q = len(mask)
    t_cur = t_start.copy()
    p_cur = p_start.copy()
    active = mask.copy()
    t_hist = [[] for _ in range(q)]
    p_hist = [[] for _ in range(q)]
    iters = np.zeros(q, dtype=np.int64)
    clamp = np.minimum if step > 0 else np.maximum
    r = 0
    while active.any():
        a = clamp(d0 + step * r, dend)
        a_next = clamp(d0 + step * (r + 1), dend)
        idx = np.nonzero(active)[0]
        current = ctrl[rows, a - h]
        owners, dist = NeighborIndex(current).query(p_cur[idx], K)
        exhausted = np.all(a[owners] == dend[owners], axis=1)
        if exhausted.any():
            active[idx[exhausted]] = False
            idx = idx[~exhausted]
            owners = owners[~exhausted]
            dist = dist[~exhausted]
            if len(idx) == 0:
                break
        w = idw_weight_matrix(dist, power, snap)
        an, ac = a_next[owners], a[owners]
        dt = np.sum(w * (knots[owners, an] - knots[owners, ac]), axis=1)
        dp = np.sum(w[:, :, None] * (ctrl[owners, an - h] - ctrl[owners, ac - h]), axis=1)
        t_cur[idx] += dt
        p_cur[idx] += dp
        iters[idx] += 1
        for i in idx:
            t_hist[i].append(t_cur[i])
            p_hist[i].append(p_cur[i].copy())
        done = (t_cur[idx] > 1.0) if step > 0 else (t_cur[idx] < 0.0)
        active[idx[done]] = False
        r += 1
    return [(np.array(t_hist[i]), np.array(p_hist[i]), int(iters[i])) for i in range(q)]


def _assemble(tk, cp, k, lo, hi):
    """Clamp reconstructed (knot, control point) pairs into a valid knot vector."""
    tk = np.clip(np.asarray(tk, dtype=np.float64), lo, hi)
    repairs = 0
    for j in range(1, len(tk)):
        if tk[j] < tk[j - 1]:
            tk[j] = min(tk[j - 1] + KNOT_EPS, hi)
            repairs += 1
    if len(tk) < k:
        pad = k - len(tk)
        tk = np.concatenate((tk, np.full(pad, hi)))
        cp = np.concatenate((cp, np.repeat(cp[-1:], pad, axis=0)))
    h = k // 2
    full = np.concatenate((np.full(h, lo), tk, np.full(k - h, hi)))
    full[:k] = lo
    full[-k:] = hi
    return full, cp, repairs


def sample_traced(traced, step_params=None, num_samples=None):
    """Evaluate a traced spline back into positions.

    With ``step_params`` (normalized times of the dataset's output steps) the
    steps inside the traced range are sampled and reported with their
    indices; with ``num_samples`` the range is sampled uniformly.
    """
    lo, hi = traced.param_range
    if step_params is not None:
        step_params = np.asarray(step_params, dtype=np.float64)
        tol = 1e-12
        steps = np.nonzero((step_params >= lo - tol) & (step_params <= hi + tol))[0]
        u = np.clip(step_params[steps], lo, hi)
        return TraceSamples(u, traced.evaluate(u), steps)
    if num_samples is None or num_samples < 1:
        raise TraceError("give step_params or a positive num_samples")
    u = np.linspace(lo, hi, num_samples) if num_samples > 1 else np.array([lo])
    return TraceSamples(u, traced.evaluate(u))
