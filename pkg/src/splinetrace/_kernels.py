"""
Hot numeric kernels with two interchangeable backends.

Every kernel exists twice: a loop-based version compiled with numba
``@njit`` and a vectorized pure-numpy version. The backend is chosen once at
import time; set ``SPLINETRACE_DISABLE_NUMBA=1`` (or uninstall numba) to force
the numpy path. :func:`set_backend` switches at runtime, which the tests and
``benchmarks/bench_kernels.py`` use to compare the two.

Conventions: ``k`` is the B-spline *order* (degree ``k - 1``), knot vectors
are clamped and have ``n + k`` entries for ``n`` control points.
"""
import os

import numpy as np

try:
    import numba
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAS_NUMBA = False

_DISABLE = os.environ.get("SPLINETRACE_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")
_backend = "numba" if (HAS_NUMBA and not _DISABLE) else "numpy"

LEAF_SIZE = 8


def backend():
    return _backend


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"``; returns the previous backend."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba is not installed")
    previous, _backend = _backend, name
    return previous


# =============================================================================
# numba kernels
# =============================================================================
if HAS_NUMBA:

    @njit(cache=True)
    def _find_span_nb(knots, k, u):
        n = knots.shape[0] - k
        if u >= knots[n]:
            return n - 1
        if u <= knots[k - 1]:
            # skip repeated knots so that t_s <= u < t_{s+1}
            s = k - 1
            while knots[s + 1] <= u:
                s += 1
            return s
        lo = k - 1
        hi = n
        mid = (lo + hi) // 2
        while u < knots[mid] or u >= knots[mid + 1]:
            if u < knots[mid]:
                hi = mid
            else:
                lo = mid
            mid = (lo + hi) // 2
        return mid

    @njit(cache=True)
    def _basis_funs_nb(knots, k, s, u, out):
        # Piegl & Tiller A2.2 with p = k - 1
        n = knots.shape[0] - k
        start = s == k - 1 and u <= knots[k - 1]
        if start or (s == n - 1 and u >= knots[n]):
            # clamped ends: exactly one-hot, so C(start) == P_0 and C(end) == P_{n-1}
            for j in range(k):
                out[j] = 0.0
            if start:
                out[0] = 1.0
            else:
                out[k - 1] = 1.0
            return
        left = np.empty(k)
        right = np.empty(k)
        out[0] = 1.0
        for j in range(1, k):
            left[j] = u - knots[s + 1 - j]
            right[j] = knots[s + j] - u
            saved = 0.0
            for r in range(j):
                den = right[r + 1] + left[j - r]
                temp = out[r] / den if den != 0.0 else 0.0
                out[r] = saved + right[r + 1] * temp
                saved = left[j - r] * temp
            out[j] = saved

    @njit(cache=True)
    def _collocation_nb(knots, k, u):
        m = u.shape[0]
        spans = np.empty(m, dtype=np.int64)
        vals = np.empty((m, k))
        buf = np.empty(k)
        for i in range(m):
            s = _find_span_nb(knots, k, u[i])
            _basis_funs_nb(knots, k, s, u[i], buf)
            spans[i] = s
            for j in range(k):
                vals[i, j] = buf[j]
        return spans, vals

    @njit(cache=True)
    def _evaluate_nb(knots, ctrl, k, u):
        m = u.shape[0]
        dim = ctrl.shape[1]
        out = np.zeros((m, dim))
        buf = np.empty(k)
        for i in range(m):
            s = _find_span_nb(knots, k, u[i])
            _basis_funs_nb(knots, k, s, u[i], buf)
            base = s - k + 1
            for j in range(k):
                for d in range(dim):
                    out[i, d] += buf[j] * ctrl[base + j, d]
        return out

    @njit(cache=True)
    def _evaluate_curves_nb(knots, ctrl, nctrl, k, u):
        c = knots.shape[0]
        dim = ctrl.shape[2]
        out = np.zeros((c, dim))
        buf = np.empty(k)
        for i in range(c):
            t = knots[i, : nctrl[i] + k]
            s = _find_span_nb(t, k, u)
            _basis_funs_nb(t, k, s, u, buf)
            base = s - k + 1
            for j in range(k):
                for d in range(dim):
                    out[i, d] += buf[j] * ctrl[i, base + j, d]
        return out

    @njit(cache=True)
    def _normal_equations_nb(spans, vals, y, n):
        m, k = vals.shape
        dim = y.shape[1]
        ab = np.zeros((k, n))
        rhs = np.zeros((n, dim))
        for r in range(m):
            base = spans[r] - k + 1
            for a in range(k):
                va = vals[r, a]
                ia = base + a
                for d in range(dim):
                    rhs[ia, d] += va * y[r, d]
                for b in range(a, k):
                    ab[k - 1 + a - b, base + b] += va * vals[r, b]
        return ab, rhs

    @njit(cache=True)
    def _build_tree_nb(points, leaf_size):
        npts = points.shape[0]
        perm = np.arange(npts)
        cap = 2 * (npts // max(leaf_size, 1) + 1) * 2 + 1
        lo_arr = np.empty(cap, dtype=np.int64)
        hi_arr = np.empty(cap, dtype=np.int64)
        left = np.full(cap, -1, dtype=np.int64)
        right = np.full(cap, -1, dtype=np.int64)
        bmin = np.empty((cap, 3))
        bmax = np.empty((cap, 3))
        stack = np.empty(cap, dtype=np.int64)
        lo_arr[0] = 0
        hi_arr[0] = npts
        nnodes = 1
        sp = 0
        stack[sp] = 0
        sp += 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            lo = lo_arr[node]
            hi = hi_arr[node]
            for d in range(3):
                mn = np.inf
                mx = -np.inf
                for i in range(lo, hi):
                    v = points[perm[i], d]
                    if v < mn:
                        mn = v
                    if v > mx:
                        mx = v
                bmin[node, d] = mn
                bmax[node, d] = mx
            if hi - lo <= leaf_size:
                continue
            dim = 0
            spread = bmax[node, 0] - bmin[node, 0]
            for d in range(1, 3):
                if bmax[node, d] - bmin[node, d] > spread:
                    spread = bmax[node, d] - bmin[node, d]
                    dim = d
            sub = perm[lo:hi].copy()
            order = np.argsort(points[sub, dim], kind="mergesort")
            for i in range(hi - lo):
                perm[lo + i] = sub[order[i]]
            mid = (lo + hi) // 2
            lchild = nnodes
            rchild = nnodes + 1
            nnodes += 2
            lo_arr[lchild] = lo
            hi_arr[lchild] = mid
            lo_arr[rchild] = mid
            hi_arr[rchild] = hi
            left[node] = lchild
            right[node] = rchild
            stack[sp] = lchild
            sp += 1
            stack[sp] = rchild
            sp += 1
        return (perm, lo_arr[:nnodes].copy(), hi_arr[:nnodes].copy(), left[:nnodes].copy(),
                right[:nnodes].copy(), bmin[:nnodes].copy(), bmax[:nnodes].copy())

    @njit(cache=True)
    def _box_dist2_nb(q, bmin, bmax, node):
        s = 0.0
        for d in range(3):
            if q[d] < bmin[node, d]:
                g = bmin[node, d] - q[d]
                s += g * g
            elif q[d] > bmax[node, d]:
                g = q[d] - bmax[node, d]
                s += g * g
        return s

    @njit(cache=True)
    def _query_tree_nb(points, owners, perm, lo_arr, hi_arr, left, right, bmin, bmax, queries, kk):
        nq = queries.shape[0]
        out_idx = np.empty((nq, kk), dtype=np.int64)
        out_d2 = np.empty((nq, kk))
        stack = np.empty(lo_arr.shape[0] + 1, dtype=np.int64)
        for qi in range(nq):
            q = queries[qi]
            best_d2 = np.full(kk, np.inf)
            best_idx = np.full(kk, -1, dtype=np.int64)
            best_own = np.full(kk, np.iinfo(np.int64).max, dtype=np.int64)
            count = 0
            sp = 0
            stack[sp] = 0
            sp += 1
            while sp > 0:
                sp -= 1
                node = stack[sp]
                if count == kk and _box_dist2_nb(q, bmin, bmax, node) > best_d2[kk - 1]:
                    continue
                lc = left[node]
                if lc < 0:
                    for i in range(lo_arr[node], hi_arr[node]):
                        p = perm[i]
                        dx = points[p, 0] - q[0]
                        dy = points[p, 1] - q[1]
                        dz = points[p, 2] - q[2]
                        d2 = dx * dx + dy * dy + dz * dz
                        own = owners[p]
                        if count == kk:
                            wd = best_d2[kk - 1]
                            if d2 > wd or (d2 == wd and own >= best_own[kk - 1]):
                                continue
                            j = kk - 1
                        else:
                            j = count
                            count += 1
                        # insertion sort on (distance, owner)
                        while j > 0 and (best_d2[j - 1] > d2 or (best_d2[j - 1] == d2 and best_own[j - 1] > own)):
                            best_d2[j] = best_d2[j - 1]
                            best_idx[j] = best_idx[j - 1]
                            best_own[j] = best_own[j - 1]
                            j -= 1
                        best_d2[j] = d2
                        best_idx[j] = p
                        best_own[j] = own
                    continue
                rc = right[node]
                dl = _box_dist2_nb(q, bmin, bmax, lc)
                dr = _box_dist2_nb(q, bmin, bmax, rc)
                if dl <= dr:
                    stack[sp] = rc
                    stack[sp + 1] = lc
                else:
                    stack[sp] = lc
                    stack[sp + 1] = rc
                sp += 2
            for j in range(kk):
                out_idx[qi, j] = best_idx[j]
                out_d2[qi, j] = best_d2[j]
        return out_idx, out_d2


# =============================================================================
# numpy kernels
# =============================================================================
def _find_spans_np(knots, k, u):
    n = knots.shape[0] - k
    spans = np.searchsorted(knots, u, side="right") - 1
    return np.clip(spans, k - 1, n - 1)


def _basis_funs_np(knots, k, spans, u):
    m = u.shape[0]
    vals = np.zeros((m, k))
    vals[:, 0] = 1.0
    left = np.empty((m, k))
    right = np.empty((m, k))
    for j in range(1, k):
        left[:, j] = u - knots[spans + 1 - j]
        right[:, j] = knots[spans + j] - u
        saved = np.zeros(m)
        for r in range(j):
            den = right[:, r + 1] + left[:, j - r]
            temp = np.divide(vals[:, r], den, out=np.zeros(m), where=den != 0.0)
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        vals[:, j] = saved
    n = knots.shape[0] - k
    start = (spans == k - 1) & (u <= knots[k - 1])
    end = (spans == n - 1) & (u >= knots[n])
    vals[start | end] = 0.0
    vals[start, 0] = 1.0
    vals[end, k - 1] = 1.0
    return vals


def _collocation_np(knots, k, u):
    spans = _find_spans_np(knots, k, u)
    return spans.astype(np.int64), _basis_funs_np(knots, k, spans, u)


def _evaluate_np(knots, ctrl, k, u):
    spans, vals = _collocation_np(knots, k, u)
    idx = spans[:, None] - k + 1 + np.arange(k)
    return np.einsum("mj,mjd->md", vals, ctrl[idx])


def _evaluate_curves_np(knots, ctrl, nctrl, k, u):
    c = knots.shape[0]
    # per-curve searchsorted restricted to the valid knot prefix
    valid = np.arange(knots.shape[1])[None, :] < (nctrl + k)[:, None]
    spans = np.sum((knots <= u) & valid, axis=1) - 1
    spans = np.clip(spans, k - 1, nctrl - 1)
    rows = np.arange(c)
    vals = np.zeros((c, k))
    vals[:, 0] = 1.0
    left = np.empty((c, k))
    right = np.empty((c, k))
    for j in range(1, k):
        left[:, j] = u - knots[rows, spans + 1 - j]
        right[:, j] = knots[rows, spans + j] - u
        saved = np.zeros(c)
        for r in range(j):
            den = right[:, r + 1] + left[:, j - r]
            temp = np.divide(vals[:, r], den, out=np.zeros(c), where=den != 0.0)
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        vals[:, j] = saved
    start = (spans == k - 1) & (u <= knots[rows, k - 1])
    end = (spans == nctrl - 1) & (u >= knots[rows, nctrl])
    vals[start | end] = 0.0
    vals[start, 0] = 1.0
    vals[end, k - 1] = 1.0
    idx = spans[:, None] - k + 1 + np.arange(k)
    return np.einsum("cj,cjd->cd", vals, ctrl[rows[:, None], idx])


def _normal_equations_np(spans, vals, y, n):
    m, k = vals.shape
    dim = y.shape[1]
    base = spans - k + 1
    ab = np.zeros((k, n))
    rhs = np.zeros((n, dim))
    for a in range(k):
        ia = base + a
        for d in range(dim):
            rhs[:, d] += np.bincount(ia, weights=vals[:, a] * y[:, d], minlength=n)
        for b in range(a, k):
            ab[k - 1 + a - b] += np.bincount(base + b, weights=vals[:, a] * vals[:, b], minlength=n)
    return ab, rhs


def _knn_brute_np(points, owners, queries, kk):
    d0 = queries[:, 0, None] - points[None, :, 0]
    d1 = queries[:, 1, None] - points[None, :, 1]
    d2_ = queries[:, 2, None] - points[None, :, 2]
    d2 = d0 * d0 + d1 * d1 + d2_ * d2_
    own = np.broadcast_to(owners, d2.shape)
    order = np.lexsort((own, d2), axis=-1)[:, :kk]
    return order.astype(np.int64), np.take_along_axis(d2, order, axis=1)


# =============================================================================
# dispatch
# =============================================================================
def collocation(knots, k, u):
    """Knot spans ``(m,)`` and the ``k`` nonzero basis values ``(m, k)`` at each ``u``."""
    knots = np.ascontiguousarray(knots, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    if _backend == "numba":
        return _collocation_nb(knots, k, u)
    return _collocation_np(knots, k, u)


def evaluate(knots, ctrl, k, u):
    """Evaluate one curve at many parameters with the local de Boor basis."""
    knots = np.ascontiguousarray(knots, dtype=np.float64)
    ctrl = np.ascontiguousarray(ctrl, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    if _backend == "numba":
        return _evaluate_nb(knots, ctrl, k, u)
    return _evaluate_np(knots, ctrl, k, u)


def evaluate_curves(knots, ctrl, nctrl, k, u):
    """Evaluate a padded stack of curves ``(c, nmax+k)``/``(c, nmax, dim)`` at one ``u``."""
    u = float(u)
    if _backend == "numba":
        return _evaluate_curves_nb(knots, ctrl, nctrl, k, u)
    return _evaluate_curves_np(knots, ctrl, nctrl, k, u)


def normal_equations(spans, vals, y, n):
    """Upper-banded ``B^T B`` (``solveh_banded`` layout) and ``B^T y``."""
    y = np.ascontiguousarray(y, dtype=np.float64)
    if _backend == "numba":
        return _normal_equations_nb(spans, vals, y, n)
    return _normal_equations_np(spans, vals, y, n)


def build_tree(points, leaf_size=LEAF_SIZE):
    """Median-split k-d tree arrays over ``points`` (numba backend only)."""
    return _build_tree_nb(np.ascontiguousarray(points, dtype=np.float64), leaf_size)


def knn(points, owners, queries, kk, tree=None):
    """Exact K nearest points to every query, ordered by (distance, owner).

    Returns point indices ``(q, kk)`` and squared distances ``(q, kk)``.
    With the numba backend ``tree`` (from :func:`build_tree`) is searched;
    the numpy backend does a vectorized brute-force scan instead.
    """
    queries = np.ascontiguousarray(np.atleast_2d(queries), dtype=np.float64)
    if _backend == "numba":
        if tree is None:
            tree = build_tree(points)
        return _query_tree_nb(points, owners, *tree, queries, kk)
    return _knn_brute_np(points, owners, queries, kk)
