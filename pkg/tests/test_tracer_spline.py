import numpy as np
import pytest

from splinetrace.bspline import (KnotPlacementConfig, ParamKind, SplineCurve, SplineSet, fit_all,
                                 uniform_interior)
from splinetrace.flowdata import PathlineSet
from splinetrace.tracer_particle import Direction, TraceError, TraceSeed
from splinetrace.tracer_spline import (anchor_index, sample_traced, trace_spline, trace_splines)


def uniform_curve(n=10, k=4, dim=3):
    knots = np.concatenate((np.zeros(k), uniform_interior(n, k), np.ones(k)))
    return SplineCurve(k, np.zeros((n, dim)), knots)


def test_anchor_index_examples():
    c = uniform_curve()
    assert anchor_index(c, 0.0) == 2
    assert anchor_index(c, 1.0) == 11
    assert anchor_index(c, 0.5) == 7
    assert c.knots[7] == pytest.approx(4 / 7)


def test_anchor_index_is_minimal_in_range():
    rng = np.random.default_rng(0)
    for _ in range(200):
        k = int(rng.integers(2, 6))
        n = int(rng.integers(k, 15))
        knots = np.concatenate((np.zeros(k), np.sort(rng.random(n - k)), np.ones(k)))
        c = SplineCurve(k, np.zeros((n, 3)), knots)
        u = float(rng.random())
        d = anchor_index(c, u)
        lo, hi = k // 2, n + k - 1 - (k + 1) // 2
        assert lo <= d <= hi
        cand = [j for j in range(lo, hi + 1) if knots[j] >= u]
        assert d == (cand[0] if cand else hi)


@pytest.fixture
def identical_set(gyre_small):
    line = gyre_small.positions[7]
    data = PathlineSet(np.stack([line] * 12))
    return fit_all(data, 4, KnotPlacementConfig(15)), line


def test_identical_curves_reproduce_the_curve(identical_set):
    splines, line = identical_set
    ref = splines.curves[0]
    for tau in (0, 37, 60, 119):
        tr = trace_spline(splines, TraceSeed(tau, ref(tau / 119)))
        np.testing.assert_array_equal(tr.knots, ref.knots)
        np.testing.assert_allclose(tr.control_points, ref.control_points, rtol=0, atol=1e-12)
        assert np.linalg.norm(tr.evaluate(tau / 119) - tr.seed.rho) <= 1e-9
        smp = sample_traced(tr, np.arange(120) / 119)
        np.testing.assert_allclose(smp.positions, ref(np.arange(120) / 119), rtol=0, atol=1e-9)


@pytest.fixture
def translation_set(uniform_set):
    data, v = uniform_set
    return fit_all(data, 4, KnotPlacementConfig(8)), v


def test_uniform_translation_traced_exactly(translation_set):
    splines, v = translation_set
    rho = np.array([0.45, 0.5, 0.55])
    for tau in (0, 13, 40):
        tr = trace_spline(splines, TraceSeed(tau, rho))
        u = np.linspace(0, 1, 33)
        expected = rho + (u * 40 - tau)[:, None] * v
        np.testing.assert_allclose(tr.evaluate(u), expected, rtol=0, atol=1e-9)


def test_one_sided_traces_start_at_seed_on_the_line(translation_set):
    splines, v = translation_set
    rho = np.array([0.45, 0.5, 0.55])
    for tau in (5, 13, 35):
        for direction in ("forward", "backward"):
            tr = trace_spline(splines, TraceSeed(tau, rho, direction))
            assert np.linalg.norm(tr.evaluate(tau / 40) - rho) <= 1e-12
            off = tr.evaluate(np.linspace(*tr.param_range, 17)) - rho
            assert np.max(np.linalg.norm(np.cross(off, v), axis=1)) <= 1e-9
            assert tr.param_range == ((tau / 40, 1.0) if direction == "forward" else (0.0, tau / 40))


def test_translation_equivariance(gyre_small):
    splines = fit_all(gyre_small.subset(range(80)), 4, KnotPlacementConfig(12))
    shift = np.array([0.3, -0.7, 0.2])
    moved = SplineSet([SplineCurve(c.order, c.control_points + shift, c.knots) for c in splines.curves],
                      splines.time_of_step)
    seeds = [TraceSeed(0, [0.5, 0.5, 0.0]), TraceSeed(60, [1.2, 0.3, 0.0]), TraceSeed(119, [1.8, 0.9, 0.0])]
    a = trace_splines(splines, seeds)
    b = trace_splines(moved, [TraceSeed(s.tau, s.rho + shift) for s in seeds])
    for ta, tb in zip(a, b):
        np.testing.assert_allclose(tb.knots, ta.knots, rtol=0, atol=1e-12)
        np.testing.assert_allclose(tb.control_points, ta.control_points + shift, rtol=0, atol=1e-12)


def test_traced_knots_valid_and_repair_free(gyre_small):
    splines = fit_all(gyre_small, 4, KnotPlacementConfig(12))
    rng = np.random.default_rng(1)
    seeds = [TraceSeed(int(t), [rng.uniform(0, 2), rng.uniform(0, 1), 0.0], d)
             for t in rng.integers(0, 120, 30) for d in Direction]
    for tr in trace_splines(splines, seeds):
        k = tr.order
        assert len(tr.knots) == tr.num_control_points + k
        assert np.all(np.diff(tr.knots) >= 0)
        assert np.all(tr.knots[:k] == tr.knots[0]) and np.all(tr.knots[-k:] == tr.knots[-1])
        assert 0.0 <= tr.knots[0] <= tr.seed_param <= tr.knots[-1] <= 1.0
        assert tr.knot_repairs == 0
        assert np.all(np.isfinite(tr.control_points))
        lo, hi = tr.param_range
        if tr.seed.direction.backward:
            assert lo == 0.0
        if tr.seed.direction.forward:
            assert hi == 1.0


def test_iteration_count_follows_control_points(gyre_small):
    for n in (8, 20, 40):
        splines = fit_all(gyre_small, 4, KnotPlacementConfig(n))
        traced = trace_splines(splines, [TraceSeed(60, [0.9, 0.5, 0.0]), TraceSeed(0, [0.4, 0.2, 0.0])])
        for tr in traced:
            assert tr.iterations == tr.num_control_points
            assert abs(tr.iterations - n) <= max(2, 0.2 * n)


def test_batched_equals_single_and_deterministic(gyre_small):
    splines = fit_all(gyre_small, 4, KnotPlacementConfig(10))
    seeds = [TraceSeed(30, [0.5, 0.5, 0.0]), TraceSeed(30, [1.5, 0.2, 0.0], "forward"),
             TraceSeed(90, [1.0, 0.8, 0.0], "backward")]
    batch = trace_splines(splines, seeds)
    again = trace_splines(splines, seeds)
    for s, b, a in zip(seeds, batch, again):
        one = trace_spline(splines, s)
        np.testing.assert_array_equal(one.knots, b.knots)
        np.testing.assert_array_equal(one.control_points, b.control_points)
        np.testing.assert_array_equal(a.control_points, b.control_points)


def test_sample_traced(translation_set):
    splines, v = translation_set
    tr = trace_spline(splines, TraceSeed(20, [0.5, 0.5, 0.5], "forward"))
    two = sample_traced(tr, num_samples=2)
    np.testing.assert_allclose(two.params, tr.param_range)
    np.testing.assert_allclose(two.positions, tr.evaluate(np.array(tr.param_range)))
    eleven = sample_traced(tr, num_samples=11)
    np.testing.assert_allclose(eleven.params, np.linspace(0.5, 1.0, 11))
    off = eleven.positions - eleven.positions[0]
    assert np.max(np.linalg.norm(np.cross(off, v), axis=1)) <= 1e-9
    steps = sample_traced(tr, np.arange(41) / 40)
    assert steps.steps.tolist() == list(range(20, 41))
    with pytest.raises(TraceError):
        sample_traced(tr)


def test_errors(gyre_small):
    splines = fit_all(gyre_small.subset(range(10)), 4, KnotPlacementConfig(6))
    with pytest.raises(TraceError, match="outside"):
        trace_spline(splines, TraceSeed(500, [0, 0, 0]))
    no_time = SplineSet(splines.curves)
    with pytest.raises(TraceError, match="time axis"):
        trace_spline(no_time, TraceSeed(0, [0, 0, 0]))
    four = fit_all(gyre_small.subset(range(10)), 4, KnotPlacementConfig(6), ParamKind.CHORD4D)
    with pytest.raises(TraceError, match="3D"):
        trace_spline(four, TraceSeed(0, [0, 0, 0]))
