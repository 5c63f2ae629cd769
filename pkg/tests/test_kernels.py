"""numba kernels and their numpy fallbacks must agree."""
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from splinetrace import _kernels

pytestmark = pytest.mark.skipif(not _kernels.HAS_NUMBA, reason="numba not installed")


def _random_clamped(rng, n, k):
    interior = np.sort(rng.random(n - k))
    return np.concatenate((np.zeros(k), interior, np.ones(k)))


def _both(fn, *args):
    prev = _kernels.backend()
    try:
        _kernels.set_backend("numba")
        a = fn(*args)
        _kernels.set_backend("numpy")
        b = fn(*args)
    finally:
        _kernels.set_backend(prev)
    return a, b


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5])
def test_collocation_parity(k):
    rng = np.random.default_rng(k)
    knots = _random_clamped(rng, 12, k)
    u = np.concatenate(([0.0, 1.0], rng.random(200), knots[k:-k]))
    (sa, va), (sb, vb) = _both(_kernels.collocation, knots, k, u)
    np.testing.assert_array_equal(sa, sb)
    np.testing.assert_allclose(va, vb, rtol=0, atol=1e-14)


def test_evaluate_parity():
    rng = np.random.default_rng(1)
    knots = _random_clamped(rng, 15, 4)
    ctrl = rng.normal(size=(15, 3))
    u = rng.random(300)
    a, b = _both(_kernels.evaluate, knots, ctrl, 4, u)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


def test_evaluate_curves_parity():
    rng = np.random.default_rng(2)
    ns = np.array([6, 9, 12])
    knots = np.ones((3, 16))
    ctrl = np.zeros((3, 12, 3))
    for i, n in enumerate(ns):
        knots[i, : n + 4] = _random_clamped(rng, n, 4)
        ctrl[i, :n] = rng.normal(size=(n, 3))
        ctrl[i, n:] = ctrl[i, n - 1]
    for u in (0.0, 0.37, 1.0):
        a, b = _both(_kernels.evaluate_curves, knots, ctrl, ns, 4, u)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


def test_normal_equations_parity():
    rng = np.random.default_rng(3)
    knots = _random_clamped(rng, 10, 4)
    u = np.sort(rng.random(80))
    spans, vals = _kernels.collocation(knots, 4, u)
    y = rng.normal(size=(80, 3))
    (aa, ra), (ab, rb) = _both(_kernels.normal_equations, spans, vals, y, 10)
    np.testing.assert_allclose(aa, ab, rtol=1e-13, atol=1e-13)
    np.testing.assert_allclose(ra, rb, rtol=1e-13, atol=1e-13)


def test_normal_equations_match_dense():
    rng = np.random.default_rng(4)
    n, k = 9, 4
    knots = _random_clamped(rng, n, k)
    u = np.sort(rng.random(60))
    spans, vals = _kernels.collocation(knots, k, u)
    dense = np.zeros((60, n))
    for j in range(60):
        dense[j, spans[j] - k + 1: spans[j] + 1] = vals[j]
    y = rng.normal(size=(60, 3))
    ab, rhs = _kernels.normal_equations(spans, vals, y, n)
    full = dense.T @ dense
    for a in range(k):  # upper band, diagonal in the last row
        np.testing.assert_allclose(ab[k - 1 - a, a:], np.diag(full, a), atol=1e-12)
    np.testing.assert_allclose(rhs, dense.T @ y, atol=1e-12)


@pytest.mark.parametrize("kk", [1, 5, 8, 40])
def test_knn_tree_matches_brute(kk):
    rng = np.random.default_rng(kk)
    pts = rng.random((500, 3))
    pts[:, 2] = 0.0  # flat data like the double gyre
    owners = np.arange(500, dtype=np.int64)
    q = rng.random((60, 3))
    tree = _kernels.build_tree(pts, _kernels.LEAF_SIZE)
    prev = _kernels.backend()
    try:
        _kernels.set_backend("numba")
        ia, da = _kernels.knn(pts, owners, q, kk, tree)
        _kernels.set_backend("numpy")
        ib, db = _kernels.knn(pts, owners, q, kk)
    finally:
        _kernels.set_backend(prev)
    np.testing.assert_array_equal(ia, ib)
    np.testing.assert_array_equal(da, db)


def test_knn_ties_resolved_by_owner():
    pts = np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0], [0, -1.0, 0], [0, 0, 1.0]])
    owners = np.array([4, 3, 2, 1, 0], dtype=np.int64)
    q = np.zeros((1, 3))
    tree = _kernels.build_tree(pts, 2)
    for name in ("numba", "numpy"):
        prev = _kernels.backend()
        _kernels.set_backend(name)
        try:
            idx, _ = _kernels.knn(pts, owners, q, 3, tree if name == "numba" else None)
        finally:
            _kernels.set_backend(prev)
        assert owners[idx[0]].tolist() == [0, 1, 2]


def test_set_backend_rejects_unknown():
    with pytest.raises(ValueError):
        _kernels.set_backend("cuda")


def test_backend_benchmark_script_runs():
    script = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    res = subprocess.run([sys.executable, str(script), "--pathlines", "40", "--steps", "60", "--reps", "1"],
                         capture_output=True, text=True, timeout=300)
    assert res.returncode == 0, res.stderr
    rows = res.stdout.splitlines()[1:]
    assert len(rows) == 8 and all(r.endswith("True") for r in rows)


@pytest.mark.parametrize("flag, expected", [("1", "numpy"), ("", "numba")])
def test_env_flag_selects_backend(flag, expected):
    env = dict(os.environ, SPLINETRACE_DISABLE_NUMBA=flag)
    code = "from splinetrace import _kernels; print(_kernels.backend())"
    res = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env)
    assert res.stdout.strip() == expected
