import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from splinetrace.flowdata import (FlowDataError, FlowFieldSpec, PathlineSet, generate_pathlines,
                                  read_pathlines, read_pln_header, write_pathlines)


def test_uniform_translation_integrates_exactly():
    spec = FlowFieldSpec.uniform((1.0, 0.0, 0.0), ((0, 10), (0, 1), (0, 1)), (0.0, 1.0))
    seed = np.array([[0.2, 0.4, 0.6]])
    data = generate_pathlines(spec, 1, 11, substeps=3, seeds=seed)
    expected = seed[0] + np.arange(11)[:, None] / 10 * np.array([1.0, 0, 0])
    np.testing.assert_allclose(data.positions[0], expected, rtol=0, atol=1e-14)
    assert not data.clamped.any()


def test_uniform_pathlines_are_affine_in_step():
    spec = FlowFieldSpec.uniform((0.5, -0.25, 0.125), ((-5, 5),) * 3, (0.0, 2.0))
    seeds = np.random.default_rng(2).uniform(-3, 3, (20, 3))
    data = generate_pathlines(spec, 20, 17, substeps=4, seeds=seeds)
    assert not data.clamped.any()
    second = np.diff(data.positions, n=2, axis=1)
    assert np.max(np.abs(second)) <= 1e-14


def test_double_gyre_matches_fine_reference():
    # oracle: the same integrator at a ten times finer sub-step
    spec = FlowFieldSpec.double_gyre(time_span=(0.0, 10.0))
    seed = np.array([[0.7, 0.3, 0.0]])
    coarse = generate_pathlines(spec, 1, 101, substeps=10, seeds=seed)
    fine = generate_pathlines(spec, 1, 101, substeps=100, seeds=seed)
    assert np.max(np.abs(coarse.positions - fine.positions)) <= 1e-6


def test_rk4_fourth_order_convergence():
    spec = FlowFieldSpec.double_gyre(time_span=(0.0, 10.0))
    seeds = np.array([[0.7, 0.3, 0.0], [1.3, 0.6, 0.0], [0.25, 0.8, 0.0]])
    ref = generate_pathlines(spec, 3, 11, substeps=640, seeds=seeds).positions
    errs = []
    for s in (4, 8, 16, 32, 64):  # one decade of step sizes, halving each time
        errs.append(np.max(np.abs(generate_pathlines(spec, 3, 11, substeps=s, seeds=seeds).positions - ref)))
    factors = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(factors >= 8.0), factors


def test_generation_is_deterministic():
    spec = FlowFieldSpec.abc()
    a = generate_pathlines(spec, 10, 20, substeps=2, seed=5)
    b = generate_pathlines(spec, 10, 20, substeps=2, seed=5)
    assert a == b
    assert a != generate_pathlines(spec, 10, 20, substeps=2, seed=6)


def test_out_of_domain_is_clamped_and_flagged():
    spec = FlowFieldSpec.uniform((0.5, 0.0, 0.0), ((0, 1), (0, 1), (0, 1)), (0.0, 1.0))
    seeds = np.array([[0.8, 0.5, 0.5], [0.2, 0.5, 0.5]])
    data = generate_pathlines(spec, 2, 5, seeds=seeds)
    assert data.clamped.tolist() == [True, False]
    assert data.positions[0, -1, 0] == 1.0
    lo, hi = data.bounds
    assert np.all(data.positions >= lo) and np.all(data.positions <= hi)


def test_non_finite_velocity_names_pathline_and_step():
    spec = FlowFieldSpec.uniform((np.inf, 0.0, 0.0), ((0, 1),) * 3, (0.0, 1.0))
    with pytest.raises(FlowDataError, match="pathline 0 at step 1"):
        generate_pathlines(spec, 2, 3)


@pytest.mark.parametrize("kwargs", [dict(num_timesteps=1), dict(substeps=0), dict(num_pathlines=0)])
def test_generate_rejects_bad_sizes(kwargs):
    args = dict(num_pathlines=2, num_timesteps=5, substeps=1)
    args.update(kwargs)
    with pytest.raises(FlowDataError):
        generate_pathlines(FlowFieldSpec.double_gyre(), **args)


def test_spec_validation():
    with pytest.raises(FlowDataError, match="missing"):
        FlowFieldSpec("double-gyre", {"A": 0.1}, ((0, 1),) * 3, (0, 1))
    with pytest.raises(FlowDataError, match="time span"):
        FlowFieldSpec.double_gyre(time_span=(1.0, 1.0))


def test_pathline_set_invariants():
    with pytest.raises(FlowDataError):
        PathlineSet(np.zeros((1, 1, 3)))
    with pytest.raises(FlowDataError):
        PathlineSet(np.zeros((0, 4, 3)))
    bad = np.zeros((2, 3, 3))
    bad[1, 2, 0] = np.nan
    with pytest.raises(FlowDataError, match="pathline 1, step 2"):
        PathlineSet(bad)
    s = PathlineSet(np.zeros((2, 3, 3)))
    np.testing.assert_array_equal(s.time_of_step, [0, 1, 2])
    with pytest.raises(ValueError):
        s.positions[0, 0, 0] = 1.0  # read-only


def test_binary_layout_and_size(tmp_path):
    s = PathlineSet(np.arange(6, dtype=float).reshape(1, 2, 3))
    path = tmp_path / "a.pln"
    write_pathlines(s, path)
    raw = path.read_bytes()
    assert len(raw) == 32 + 2 * 3 * 8
    assert struct.unpack("<4sIIIQQ", raw[:32]) == (b"PLN1", 1, 1, 2, 0, 32)
    np.testing.assert_array_equal(np.frombuffer(raw[32:], "<f8"), np.arange(6.0))
    assert read_pln_header(path) == (1, 2, 32)


def test_binary_round_trip_of_generated(tmp_path, gyre_small):
    path = tmp_path / "g.pln"
    write_pathlines(gyre_small, path)
    back = read_pathlines(path)
    assert back == gyre_small
    assert back.positions.tobytes() == gyre_small.positions.tobytes()


def test_csv_parse(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("pathline_id,step,x,y,z\n"
                    "0,0,0.0,0.0,0.0\n0,1,0.1,0.0,0.0\n0,2,0.2,0.0,0.0\n"
                    "1,0,1.0,1.0,1.0\n1,1,1.1,1.0,1.0\n1,2,1.2,1.0,1.0\n")
    s = read_pathlines(path)
    assert (s.num_pathlines, s.num_timesteps) == (2, 3)
    assert s.positions[1, 2, 0] == 1.2


def test_csv_ragged_names_pathline(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("pathline_id,step,x,y,z\n"
                    "0,0,0,0,0\n0,1,0,0,0\n0,2,0,0,0\n1,0,1,1,1\n1,1,1,1,1\n")
    with pytest.raises(FlowDataError, match="pathline 1"):
        read_pathlines(path)


def test_csv_nan_names_location(tmp_path):
    path = tmp_path / "n.csv"
    path.write_text("pathline_id,step,x,y,z\n0,0,0,0,0\n0,1,0,nan,0\n")
    with pytest.raises(FlowDataError, match="pathline 0, step 1"):
        read_pathlines(path)


def test_csv_round_trip_has_17_digits(tmp_path, gyre_small):
    path = tmp_path / "g.csv"
    small = gyre_small.subset(range(5))
    write_pathlines(small, path)
    back = read_pathlines(path)
    np.testing.assert_allclose(back.positions, small.positions, rtol=1e-12, atol=0)
    row = path.read_text().splitlines()[2].split(",")
    assert float(row[2]) == small.positions[0, 1, 0]


def test_write_rejects_empty(tmp_path):
    with pytest.raises(FlowDataError):
        write_pathlines(None, tmp_path / "x.pln")


def test_bad_magic(tmp_path):
    path = tmp_path / "x.pln"
    path.write_bytes(b"NOPE" + bytes(40))
    with pytest.raises(FlowDataError, match="magic"):
        read_pathlines(path)


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(2, 5), st.just(3)), elements=finite))
def test_round_trip_property(tmp_path_factory, pos):
    d = tmp_path_factory.mktemp("rt")
    s = PathlineSet(pos)
    write_pathlines(s, d / "a.pln")
    write_pathlines(s, d / "a.csv")
    assert read_pathlines(d / "a.pln") == s
    np.testing.assert_allclose(read_pathlines(d / "a.csv").positions, pos, rtol=1e-12, atol=0)
    lo, hi = s.bounds
    assert np.all(pos >= lo) and np.all(pos <= hi)
