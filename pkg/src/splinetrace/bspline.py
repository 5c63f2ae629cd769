"""
Clamped B-spline curves fitted to pathlines.

``k`` is always the curve *order* (polynomial degree ``k - 1``). A curve with
``n`` control points carries ``n + k`` knots in ``[0, 1]`` whose first ``k``
entries are 0 and last ``k`` entries are 1, so it interpolates its first and
last control points.
"""
from __future__ import annotations

import logging
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded, lstsq

from . import _kernels

log = logging.getLogger(__name__)

DEFAULT_ORDER = 4
NORMAL_COND_LIMIT = 1e10
COLLOCATION_COND_LIMIT = 1e10

SPL_MAGIC = b"SPL1"
SPL_VERSION = 1
_SPL_HEADER = struct.Struct("<4sIIII")
_TIME_TAG = b"TIME"


class SplineError(ValueError):
    """Invalid spline input, or a fit that cannot be carried out."""


class ParamKind(str, Enum):
    TIME = "time"
    CHORD4D = "chord4d"


@dataclass(frozen=True)
class KnotPlacementConfig:
    num_control_points: int
    feature_smoothing_width: int = 2
    fallback: str = "uniform"

    def __post_init__(self):
        if self.num_control_points < 1:
            raise SplineError("num_control_points must be positive")
        if self.feature_smoothing_width < 0:
            raise SplineError("feature_smoothing_width must be >= 0")
        if self.fallback != "uniform":
            raise SplineError(f"unsupported knot fallback {self.fallback!r}")


@dataclass(frozen=True, eq=False)
class SplineCurve:
    """One clamped B-spline curve ``C(u) = sum_i B_{i,k}(u) P_i``.

    Fitted curves span ``[0, 1]``; traced partial curves may cover a sub-range.
    """

    order: int
    control_points: np.ndarray
    knots: np.ndarray
    param_kind: ParamKind = ParamKind.TIME
    rmse: float = field(default=float("nan"), compare=False)

    def __post_init__(self):
        k = int(self.order)
        ctrl = np.ascontiguousarray(self.control_points, dtype=np.float64)
        knots = np.ascontiguousarray(self.knots, dtype=np.float64)
        if ctrl.ndim != 2 or ctrl.shape[1] not in (3, 4):
            raise SplineError(f"control points must be (n, 3) or (n, 4), got {ctrl.shape}")
        n = ctrl.shape[0]
        if k < 1 or n < k:
            raise SplineError(f"need n >= k >= 1, got n={n}, k={k}")
        if knots.shape != (n + k,):
            raise SplineError(f"expected {n + k} knots, got {knots.shape[0]}")
        if np.any(np.diff(knots) < 0):
            raise SplineError("knots must be non-decreasing")
        if np.any(knots[:k] != knots[0]) or np.any(knots[-k:] != knots[-1]):
            raise SplineError("knot vector must be clamped (k equal knots at each end)")
        if not (0.0 <= knots[0] < knots[-1] <= 1.0):
            raise SplineError("knots must lie in [0, 1] and span a non-empty range")
        ctrl.setflags(write=False)
        knots.setflags(write=False)
        object.__setattr__(self, "order", k)
        object.__setattr__(self, "control_points", ctrl)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "param_kind", ParamKind(self.param_kind))

    @property
    def n(self):
        return self.control_points.shape[0]

    @property
    def dim(self):
        return self.control_points.shape[1]

    def __call__(self, u):
        return evaluate(self, u)

    def __eq__(self, other):
        if not isinstance(other, SplineCurve):
            return NotImplemented
        return (self.order == other.order and self.param_kind == other.param_kind
                and np.array_equal(self.knots, other.knots)
                and np.array_equal(self.control_points, other.control_points))


# -----------------------------------------------------------------------------
# basis and evaluation
# -----------------------------------------------------------------------------
def basis(i, k, u, knots):
    """Cox-de Boor recursion for ``B_{i,k}(u)``, straight from the definition.

    0/0 terms count as 0. The last basis function is closed on the right so
    that ``B_{n-1,k}(1) == 1`` for a clamped knot vector. This is the slow
    reference path; :func:`evaluate` uses the local de Boor kernels instead.
    """
    knots = np.asarray(knots, dtype=np.float64)
    n = len(knots) - k
    if not 0 <= i < n:
        raise SplineError(f"basis index {i} outside [0, {n - 1}]")
    if not 0.0 <= u <= 1.0:
        raise SplineError(f"parameter {u} outside [0, 1]")
    last = knots[-1]
    # the unique non-empty span whose right end is the final knot
    closing = int(np.nonzero(knots[:-1] < last)[0][-1]) if np.any(knots[:-1] < last) else -1

    def rec(i, k):
        if k == 1:
            if knots[i] <= u < knots[i + 1]:
                return 1.0
            return 1.0 if (u == last and i == closing) else 0.0
        out = 0.0
        den = knots[i + k - 1] - knots[i]
        if den != 0.0:
            out += (u - knots[i]) / den * rec(i, k - 1)
        den = knots[i + k] - knots[i + 1]
        if den != 0.0:
            out += (knots[i + k] - u) / den * rec(i + 1, k - 1)
        return out

    return rec(i, k)


def evaluate(curve, u):
    """Evaluate ``curve`` at scalar or array ``u`` in ``[0, 1]`` (no extrapolation)."""
    arr = np.atleast_1d(np.asarray(u, dtype=np.float64))
    lo, hi = curve.knots[0], curve.knots[-1]
    if arr.size and (not np.all(np.isfinite(arr)) or arr.min() < lo or arr.max() > hi):
        raise SplineError(f"evaluation parameter outside [{lo}, {hi}]")
    out = _kernels.evaluate(curve.knots, curve.control_points, curve.order, arr)
    return out[0] if np.ndim(u) == 0 else out


# -----------------------------------------------------------------------------
# parameterization
# -----------------------------------------------------------------------------
def chord_length_params(points):
    """Cumulative Euclidean chord length of ``points`` normalized to ``[0, 1]``.

    Returns ``None`` when the total length is zero.
    """
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    total = seg.sum()
    if total == 0.0:
        return None
    u = np.concatenate(([0.0], np.cumsum(seg))) / total
    u[-1] = 1.0
    return u


def spacetime_points(pathline, times):
    """Append time, scaled onto the largest spatial extent, as a 4th coordinate."""
    pathline = np.asarray(pathline, dtype=np.float64)
    tn = (times - times[0]) / (times[-1] - times[0])
    extent = float(np.max(pathline.max(axis=0) - pathline.min(axis=0)))
    return np.column_stack([pathline, tn * extent])


def parameterize(pathline, kind=ParamKind.TIME, times=None):
    """Parameters ``u_0 = 0 < ... < u_{m-1} = 1`` for the points of ``pathline``.

    Returns ``(u, kind_used)``; ``kind_used`` is ``TIME`` when a chord-length
    request had to fall back because the particle never moves.
    """
    pathline = np.asarray(pathline, dtype=np.float64)
    m = len(pathline)
    if m < 2:
        raise SplineError("need at least two points to parameterize")
    times = np.arange(m, dtype=np.float64) if times is None else np.asarray(times, dtype=np.float64)
    u_time = (times - times[0]) / (times[-1] - times[0])
    kind = ParamKind(kind)
    if kind is ParamKind.TIME:
        return u_time, kind
    u = chord_length_params(spacetime_points(pathline, times))
    if u is None:
        log.debug("stationary pathline: falling back to time parameterization")
        return u_time, ParamKind.TIME
    return u, kind


# -----------------------------------------------------------------------------
# knot placement
# -----------------------------------------------------------------------------
def feature_function(data, params, k, smoothing_width=2):
    """Knot-density feature from the k-th derivative of the data.

    Returns ``(locations, feature)``: the k-th derivative is estimated by
    divided differences over windows of ``k + 1`` points, its magnitude is
    tempered by the ``1/k`` power and smoothed with a centered moving average.
    """
    data = np.asarray(data, dtype=np.float64)
    u = np.asarray(params, dtype=np.float64)
    deriv = data
    # rounding-error bound carried through the same differences; anything
    # below it is noise on data that is really a lower-degree polynomial
    noise = np.full(len(u), 64.0 * np.finfo(np.float64).eps * float(np.max(np.abs(data), initial=0.0)))
    for j in range(1, k + 1):
        du = u[j:] - u[:-j]
        diff = deriv[1:] - deriv[:-1]
        deriv = np.divide(j * diff, du[:, None], out=np.zeros_like(diff), where=du[:, None] != 0.0)
        noise = np.divide(j * (noise[1:] + noise[:-1]), du, out=np.zeros_like(du), where=du != 0.0)
    norm = np.linalg.norm(deriv, axis=1)
    mag = np.where(norm > np.sqrt(data.shape[1]) * noise, norm, 0.0) ** (1.0 / k)
    win = np.lib.stride_tricks.sliding_window_view(u, k + 1)
    loc = win.mean(axis=1)
    if smoothing_width > 0 and mag.size > 1:
        w = smoothing_width
        csum = np.concatenate(([0.0], np.cumsum(mag)))
        idx = np.arange(mag.size)
        lo = np.maximum(idx - w, 0)
        hi = np.minimum(idx + w + 1, mag.size)
        mag = (csum[hi] - csum[lo]) / (hi - lo)
    return loc, mag


def cumulative_feature(loc, feature):
    """Trapezoid-rule integral of the feature over ``[0, 1]`` at ``(x, F(x))`` nodes."""
    x = np.concatenate(([0.0], loc, [1.0]))
    f = np.concatenate(([feature[0]], feature, [feature[-1]]))
    cum = np.concatenate(([0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(x))))
    return x, cum


def uniform_interior(n, k):
    return np.arange(1, n - k + 1, dtype=np.float64) / (n - k + 1)


def place_knots(pathline, params, config, k=DEFAULT_ORDER):
    """Clamped knot vector with interior knots at equal cumulative-feature quantiles."""
    n = config.num_control_points
    data = np.asarray(pathline, dtype=np.float64)
    u = np.asarray(params, dtype=np.float64)
    m = len(u)
    if n < k:
        raise SplineError(f"num_control_points={n} is below the order {k}")
    if m < n:
        raise SplineError(f"insufficient data points: {m} points for {n} control points")
    n_int = n - k
    if n_int == 0:
        return np.concatenate((np.zeros(k), np.ones(k)))

    interior = None
    if m > k:
        loc, feat = feature_function(data, u, k, config.feature_smoothing_width)
        fmax = float(feat.max()) if feat.size else 0.0
        if fmax > 0.0 and np.isfinite(fmax):
            feat = feat + 1e-12 * fmax
            x, cum = cumulative_feature(loc, feat)
            levels = cum[-1] * uniform_interior(n, k)
            interior = np.interp(levels, cum, x)
            if np.any(np.diff(interior) <= 0) or interior[0] <= 0 or interior[-1] >= 1:
                interior = None
    if interior is None:
        interior = uniform_interior(n, k)
    interior = spread_over_gaps(interior, u)
    knots = np.concatenate((np.zeros(k), interior, np.ones(k)))
    return enforce_schoenberg_whitney(knots, u, k)


def spread_over_gaps(interior, u):
    """Keep at most one interior knot per gap ``(u_j, u_{j+1})`` of the parameters.

    Knots crowding a gap leave basis functions with (nearly) no data of their
    own; surplus knots move to the midpoints of the nearest free gaps.
    """
    gaps = np.nonzero(np.diff(u) > 0)[0]
    nk = len(interior)
    if nk == 0 or nk > len(gaps):
        return interior
    g = np.clip(np.searchsorted(u[gaps], interior, side="right") - 1, 0, len(gaps) - 1)
    # greedy "next free gap" pass, closed form: slot_i - i is a running maximum
    i = np.arange(nk)
    slot = np.minimum(np.maximum.accumulate(g - i), len(gaps) - nk) + i
    out = np.array(interior, dtype=np.float64)
    moved = slot != g
    if moved.any():
        j = gaps[slot[moved]]
        out[moved] = 0.5 * (u[j] + u[j + 1])
    return out


def schoenberg_whitney_assignment(knots, u, k):
    """Greedy data assignment proving full column rank, or ``None`` if infeasible.

    Basis ``i`` needs its own parameter ``u_j`` (strictly increasing in ``i``)
    with ``t_i < u_j < t_{i+k}``; the clamped ends admit ``u = 0`` for the first
    and ``u = 1`` for the last basis function. Returns indices into ``u``.
    """
    knots = np.asarray(knots, dtype=np.float64)
    n = len(knots) - k
    uu, first = np.unique(np.asarray(u, dtype=np.float64), return_index=True)
    # smallest admissible parameter per basis, then "next unused" as a running max
    cand = np.searchsorted(uu, knots[:n], side="right")
    cand[0] = np.searchsorted(uu, knots[0], side="left")
    i = np.arange(n)
    assign = np.maximum.accumulate(cand - i) + i
    if assign[-1] >= len(uu):
        return None
    v = uu[assign]
    hi = knots[k:k + n]
    ok = v < hi
    ok[-1] = v[-1] <= hi[-1]
    return first[assign] if ok.all() else None


def _averaging_interior(u, n, k):
    m = len(u)
    p = k - 1
    if m == n:
        return np.array([u[j:j + p].mean() for j in range(1, n - p)])
    d = m / (n - p)
    out = np.empty(n - k)
    for j in range(1, n - p):
        i = int(j * d)
        a = j * d - i
        out[j - 1] = (1.0 - a) * u[i - 1] + a * u[i]
    return out


def enforce_schoenberg_whitney(knots, u, k):
    """Nudge interior knots until every basis function owns a data parameter.

    Offending knots move right to the midpoint between the next free parameter
    and its successor; if that cannot succeed the averaging knots of Piegl &
    Tiller are used. The knot count never changes.
    """
    knots = np.array(knots, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if schoenberg_whitney_assignment(knots, u, k) is not None:
        return knots
    n = len(knots) - k
    m = len(u)
    j = 0
    prev = -np.inf
    ok = True
    for i in range(n):
        lo = knots[i]
        while j < m and (u[j] <= prev or (u[j] <= lo and not (i == 0 and u[j] == lo))):
            j += 1
        if j == m:
            ok = False
            break
        hi = knots[i + k]
        if not (u[j] < hi or (i == n - 1 and u[j] <= hi)):
            if not (k <= i + k < n) or j + 1 >= m:
                ok = False
                break
            knots[i + k] = 0.5 * (u[j] + u[j + 1])
            # keep later interior knots strictly above the moved one
            q = j + 1
            for s in range(i + k + 1, n):
                if knots[s] > knots[s - 1]:
                    break
                while q + 1 < m and 0.5 * (u[q] + u[q + 1]) <= knots[s - 1]:
                    q += 1
                if q + 1 >= m:
                    ok = False
                    break
                knots[s] = 0.5 * (u[q] + u[q + 1])
            if not ok:
                break
        prev = u[j]
        j += 1
    if ok and schoenberg_whitney_assignment(knots, u, k) is not None:
        return knots
    knots = np.concatenate((np.zeros(k), _averaging_interior(u, n, k), np.ones(k)))
    if schoenberg_whitney_assignment(knots, u, k) is None:
        raise SplineError("cannot place knots satisfying the Schoenberg-Whitney condition")
    return knots


# -----------------------------------------------------------------------------
# fitting
# -----------------------------------------------------------------------------
def _normal_condition(ab, factor, iterations=4):
    """Cheap estimate of the 2-norm condition of a banded SPD matrix.

    Gershgorin bounds the largest eigenvalue; a few inverse-iteration steps
    with the Cholesky factor estimate the smallest.
    """
    k, n = ab.shape
    rowsum = np.abs(ab[k - 1]).copy()
    for a in range(1, k):
        off = np.abs(ab[k - 1 - a, a:])
        rowsum[:-a] += off
        rowsum[a:] += off
    x = np.cos(np.arange(n) * 2.3)  # fixed start, rich in oscillating components
    for _ in range(iterations):
        x /= np.linalg.norm(x)
        x = cho_solve_banded((factor, False), x, check_finite=False)
    lam_min = 1.0 / np.linalg.norm(x) if np.all(np.isfinite(x)) else 0.0
    return rowsum.max() / lam_min if lam_min > 0 else np.inf


def least_squares_control_points(data, params, knots, k):
    """Control points minimizing ``sum ||rho_j - C(u_j)||^2`` for fixed knots.

    The banded normal equations are used when their Cholesky factor is well
    conditioned; otherwise the collocation system is solved directly by SVD.
    Raises :class:`SplineError` when the collocation matrix is (numerically)
    rank deficient.
    """
    n = len(knots) - k
    spans, vals = _kernels.collocation(knots, k, params)
    ab, rhs = _kernels.normal_equations(spans, vals, data, n)
    try:
        factor = cholesky_banded(ab, check_finite=False)
        if _normal_condition(ab, factor) < NORMAL_COND_LIMIT:
            return cho_solve_banded((factor, False), rhs, check_finite=False)
    except LinAlgError:
        pass
    dense = np.zeros((len(params), n))
    rows = np.arange(len(params))[:, None]
    dense[rows, spans[:, None] - k + 1 + np.arange(k)] = vals
    ctrl, _, rank, sv = lstsq(dense, data, check_finite=False)
    cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
    if rank < n or cond > COLLOCATION_COND_LIMIT:
        raise SplineError(f"rank-deficient collocation matrix (n={n}, m={len(params)}, k={k}, "
                          f"rank {rank}, condition {cond:.3e})")
    return ctrl


def fit_curve(pathline, k=DEFAULT_ORDER, config=None, kind=ParamKind.TIME, times=None, knots=None):
    """Least-squares B-spline fit of one pathline.

    ``knots`` overrides automatic placement (it must be clamped and satisfy the
    Schoenberg-Whitney condition for the chosen parameters). The returned
    curve carries the spatial fit RMSE in ``rmse``.
    """
    pathline = np.asarray(pathline, dtype=np.float64)
    if config is None and knots is None:
        raise SplineError("either config or knots is required")
    kind = ParamKind(kind)
    # a stationary particle falls back to time parameters but stays a 4D curve
    u, _ = parameterize(pathline, kind, times)
    if kind is ParamKind.CHORD4D:
        tt = np.arange(len(pathline), dtype=np.float64) if times is None else np.asarray(times, dtype=np.float64)
        data = spacetime_points(pathline, tt)
    else:
        data = pathline
    if knots is None:
        knots = place_knots(data, u, config, k)
        try:
            ctrl = least_squares_control_points(data, u, knots, k)
        except SplineError:
            # feature knots can be feasible yet badly conditioned where they
            # are as dense as the data; averaging knots are well posed
            log.debug("ill-conditioned feature knots; refitting with averaging knots")
            n = config.num_control_points
            knots = np.concatenate((np.zeros(k), _averaging_interior(u, n, k), np.ones(k)))
            ctrl = least_squares_control_points(data, u, knots, k)
    else:
        knots = np.asarray(knots, dtype=np.float64)
        if len(u) < len(knots) - k:
            raise SplineError(f"insufficient data points: {len(u)} points for {len(knots) - k} control points")
        if schoenberg_whitney_assignment(knots, u, k) is None:
            raise SplineError("given knots violate the Schoenberg-Whitney condition")
        ctrl = least_squares_control_points(data, u, knots, k)
    fitted = _kernels.evaluate(knots, ctrl, k, u)
    rmse = float(np.sqrt(np.mean(np.sum((fitted[:, :3] - pathline) ** 2, axis=1))))
    return SplineCurve(k, ctrl, knots, kind, rmse)


# -----------------------------------------------------------------------------
# spline sets
# -----------------------------------------------------------------------------
@dataclass(eq=False)
class SplineSet:
    """Fitted curves of a whole pathline set, sharing order and parameterization.

    ``time_of_step`` is the source dataset's time axis, needed to turn a step
    index or physical time into a curve parameter.
    """

    curves: list
    time_of_step: np.ndarray = None
    fit_time: float = 0.0

    def __post_init__(self):
        if not self.curves:
            raise SplineError("a spline set needs at least one curve")
        c0 = self.curves[0]
        for idx, c in enumerate(self.curves):
            if c.order != c0.order or c.dim != c0.dim or c.param_kind != c0.param_kind:
                raise SplineError(f"curve {idx} does not share order/dimension/parameterization")
        if self.time_of_step is not None:
            self.time_of_step = np.asarray(self.time_of_step, dtype=np.float64)
        self._packed = None

    def __len__(self):
        return len(self.curves)

    def __getitem__(self, i):
        return self.curves[i]

    @property
    def order(self):
        return self.curves[0].order

    @property
    def dim(self):
        return self.curves[0].dim

    @property
    def param_kind(self):
        return self.curves[0].param_kind

    @property
    def residuals(self):
        return np.array([c.rmse for c in self.curves])

    @property
    def dataset_time_range(self):
        if self.time_of_step is None:
            return (0.0, 1.0)
        return (float(self.time_of_step[0]), float(self.time_of_step[-1]))

    def normalize_time(self, tau):
        """Curve parameter for physical time ``tau``."""
        t0, t1 = self.dataset_time_range
        if not t0 <= tau <= t1:
            raise SplineError(f"time {tau} outside the dataset range [{t0}, {t1}]")
        return (tau - t0) / (t1 - t0)

    def packed(self):
        """Padded arrays ``(knots (c, nmax+k), ctrl (c, nmax, dim), n (c,))``."""
        if self._packed is None:
            k = self.order
            ns = np.array([c.n for c in self.curves], dtype=np.int64)
            nmax = int(ns.max())
            knots = np.ones((len(self.curves), nmax + k))
            ctrl = np.zeros((len(self.curves), nmax, self.dim))
            for i, c in enumerate(self.curves):
                knots[i, : c.n + k] = c.knots
                ctrl[i, : c.n] = c.control_points
                ctrl[i, c.n:] = c.control_points[-1]
            self._packed = (knots, ctrl, ns)
        return self._packed

    def subset(self, indices):
        return SplineSet([self.curves[i] for i in indices], self.time_of_step, self.fit_time)

    def __eq__(self, other):
        if not isinstance(other, SplineSet):
            return NotImplemented
        return len(self) == len(other) and all(a == b for a, b in zip(self.curves, other.curves))


def fit_all(pathlines, k=DEFAULT_ORDER, config=None, kind=ParamKind.TIME, threads=1):
    """Fit every pathline of a :class:`PathlineSet`; all-or-nothing."""
    times = pathlines.time_of_step
    positions = pathlines.positions

    def one(i):
        try:
            return fit_curve(positions[i], k, config, kind, times)
        except SplineError as exc:
            raise SplineError(f"pathline {i}: {exc}") from exc

    start = time.perf_counter()
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            curves = list(pool.map(one, range(pathlines.num_pathlines)))
    else:
        curves = [one(i) for i in range(pathlines.num_pathlines)]
    elapsed = time.perf_counter() - start
    return SplineSet(curves, times, elapsed)


# -----------------------------------------------------------------------------
# SPL1 files
# -----------------------------------------------------------------------------
def write_splines(splines, path):
    """Write SPL1: header, then per curve ``n``, knots and control points.

    An optional trailer (``TIME``, u32 count, f64 times) records the source
    time axis; readers that stop after the last curve are unaffected.
    """
    k, dim = splines.order, splines.dim
    parts = [_SPL_HEADER.pack(SPL_MAGIC, SPL_VERSION, len(splines), k, dim)]
    for c in splines.curves:
        parts.append(struct.pack("<I", c.n))
        parts.append(c.knots.astype("<f8").tobytes())
        parts.append(c.control_points.astype("<f8").tobytes())
    if splines.time_of_step is not None:
        parts.append(_TIME_TAG + struct.pack("<I", len(splines.time_of_step)))
        parts.append(splines.time_of_step.astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_splines(path):
    raw = Path(path).read_bytes()
    if len(raw) < _SPL_HEADER.size:
        raise SplineError(f"{path}: truncated SPL1 header")
    magic, version, count, k, dim = _SPL_HEADER.unpack_from(raw, 0)
    if magic != SPL_MAGIC:
        raise SplineError(f"{path}: bad magic {magic!r}, expected {SPL_MAGIC!r}")
    if version != SPL_VERSION:
        raise SplineError(f"{path}: unsupported SPL1 version {version}")
    kind = ParamKind.CHORD4D if dim == 4 else ParamKind.TIME
    off = _SPL_HEADER.size
    curves = []
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<I", raw, off)
            off += 4
            knots = np.frombuffer(raw, "<f8", n + k, off).astype(np.float64)
            off += 8 * (n + k)
            ctrl = np.frombuffer(raw, "<f8", n * dim, off).astype(np.float64).reshape(n, dim)
            off += 8 * n * dim
            curves.append(SplineCurve(k, ctrl, knots, kind))
    except (struct.error, ValueError) as exc:
        raise SplineError(f"{path}: malformed SPL1 payload: {exc}") from None
    times = None
    if raw[off:off + 4] == _TIME_TAG:
        (m,) = struct.unpack_from("<I", raw, off + 4)
        times = np.frombuffer(raw, "<f8", m, off + 8).astype(np.float64)
    return SplineSet(curves, times)
