"""
Pathline datasets: in-memory model, PLN1/CSV file I/O and synthetic
ground truth integrated from analytic flow fields.
"""
from __future__ import annotations

import csv
import logging
import math
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

PLN_MAGIC = b"PLN1"
PLN_VERSION = 1
PLN_HEADER = struct.Struct("<4sIIIQQ")  # magic, version, pathlines, steps, reserved, payload offset
assert PLN_HEADER.size == 32


class FlowDataError(ValueError):
    """Invalid pathline data or file contents."""


class FlowKind(str, Enum):
    DOUBLE_GYRE = "double-gyre"
    ABC = "abc"
    UNIFORM = "uniform"


_REQUIRED_PARAMS = {
    FlowKind.DOUBLE_GYRE: ("A", "epsilon", "omega"),
    FlowKind.ABC: ("A", "B", "C"),
    FlowKind.UNIFORM: ("vx", "vy", "vz"),
}


@dataclass(frozen=True)
class FlowFieldSpec:
    """An analytic velocity field, its seeding box and integration window."""

    kind: FlowKind
    parameters: dict
    domain: tuple  # ((xmin, xmax), (ymin, ymax), (zmin, zmax))
    time_span: tuple

    def __post_init__(self):
        object.__setattr__(self, "kind", FlowKind(self.kind))
        missing = [p for p in _REQUIRED_PARAMS[self.kind] if p not in self.parameters]
        if missing:
            raise FlowDataError(f"{self.kind.value}: missing parameters {missing}")
        t0, t1 = self.time_span
        if not t1 > t0:
            raise FlowDataError(f"degenerate time span {self.time_span}")
        if len(self.domain) != 3 or any(hi < lo for lo, hi in self.domain):
            raise FlowDataError(f"invalid domain {self.domain}")

    @classmethod
    def double_gyre(cls, A=0.1, epsilon=0.25, omega=2 * math.pi / 10, time_span=(0.0, 20.0)):
        return cls(FlowKind.DOUBLE_GYRE, {"A": A, "epsilon": epsilon, "omega": omega},
                   ((0.0, 2.0), (0.0, 1.0), (0.0, 0.0)), tuple(time_span))

    @classmethod
    def abc(cls, A=math.sqrt(3), B=math.sqrt(2), C=1.0, time_span=(0.0, 5.0)):
        box = (0.0, 2 * math.pi)
        return cls(FlowKind.ABC, {"A": A, "B": B, "C": C}, (box, box, box), tuple(time_span))

    @classmethod
    def uniform(cls, velocity=(1.0, 0.0, 0.0), domain=((0.0, 1.0),) * 3, time_span=(0.0, 1.0)):
        vx, vy, vz = velocity
        return cls(FlowKind.UNIFORM, {"vx": vx, "vy": vy, "vz": vz}, tuple(domain), tuple(time_span))

    def velocity(self, t, pos):
        """Velocity at time ``t`` for an ``(N, 3)`` array of positions."""
        p = self.parameters
        x, y, z = pos[:, 0], pos[:, 1], pos[:, 2]
        out = np.zeros_like(pos)
        if self.kind is FlowKind.DOUBLE_GYRE:
            a = p["epsilon"] * math.sin(p["omega"] * t)
            b = 1.0 - 2.0 * a
            f = a * x * x + b * x
            dfdx = 2.0 * a * x + b
            out[:, 0] = -math.pi * p["A"] * np.sin(math.pi * f) * np.cos(math.pi * y)
            out[:, 1] = math.pi * p["A"] * np.cos(math.pi * f) * np.sin(math.pi * y) * dfdx
        elif self.kind is FlowKind.ABC:
            out[:, 0] = p["A"] * np.sin(z) + p["C"] * np.cos(y)
            out[:, 1] = p["B"] * np.sin(x) + p["A"] * np.cos(z)
            out[:, 2] = p["C"] * np.sin(y) + p["B"] * np.cos(x)
        else:
            out[:] = (p["vx"], p["vy"], p["vz"])
        return out


@dataclass(frozen=True, eq=False)
class PathlineSet:
    """Trajectories of many particles sampled at the same ``m`` output times.

    ``positions`` has shape ``(num_pathlines, num_timesteps, 3)`` and is stored
    pathline-major. ``time_of_step`` defaults to the step index.
    """

    positions: np.ndarray
    time_of_step: np.ndarray = None
    clamped: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.float64)
        if pos.ndim != 3 or pos.shape[2] != 3:
            raise FlowDataError(f"positions must have shape (pathlines, steps, 3), got {pos.shape}")
        if pos.shape[0] < 1:
            raise FlowDataError("a pathline set needs at least one pathline")
        if pos.shape[1] < 2:
            raise FlowDataError("a pathline set needs at least two time steps")
        bad = np.argwhere(~np.isfinite(pos))
        if bad.size:
            i, j, _ = bad[0]
            raise FlowDataError(f"non-finite position at pathline {i}, step {j}")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

        times = self.time_of_step
        times = np.arange(pos.shape[1], dtype=np.float64) if times is None else np.asarray(times, dtype=np.float64)
        if times.shape != (pos.shape[1],) or np.any(np.diff(times) <= 0):
            raise FlowDataError("time_of_step must be strictly increasing, one entry per step")
        times.setflags(write=False)
        object.__setattr__(self, "time_of_step", times)

        clamped = np.zeros(pos.shape[0], dtype=bool) if self.clamped is None else np.asarray(self.clamped, dtype=bool)
        object.__setattr__(self, "clamped", clamped)

    @property
    def num_pathlines(self):
        return self.positions.shape[0]

    @property
    def num_timesteps(self):
        return self.positions.shape[1]

    @property
    def bounds(self):
        flat = self.positions.reshape(-1, 3)
        return flat.min(axis=0), flat.max(axis=0)

    @property
    def diameter(self):
        lo, hi = self.bounds
        return float(np.linalg.norm(hi - lo))

    def normalized_times(self):
        t = self.time_of_step
        return (t - t[0]) / (t[-1] - t[0])

    def subset(self, indices):
        indices = np.asarray(indices)
        return PathlineSet(self.positions[indices], self.time_of_step, self.clamped[indices])

    def __eq__(self, other):
        if not isinstance(other, PathlineSet):
            return NotImplemented
        return (np.array_equal(self.positions, other.positions)
                and np.array_equal(self.time_of_step, other.time_of_step))


# -----------------------------------------------------------------------------
# generation
# -----------------------------------------------------------------------------
def generate_pathlines(spec, num_pathlines, num_timesteps, substeps=10, seed=0, seeds=None):
    """Integrate pathlines through ``spec`` with classical RK4.

    Seeds are drawn uniformly in ``spec.domain`` from ``numpy.random.default_rng(seed)``
    unless explicit ``seeds`` of shape ``(num_pathlines, 3)`` are given. Each
    output interval is split into ``substeps`` RK4 steps. Particles leaving the
    domain are clamped back onto its boundary and flagged in ``clamped``.
    """
    if num_timesteps < 2:
        raise FlowDataError("num_timesteps must be >= 2")
    if substeps < 1:
        raise FlowDataError("substeps must be >= 1")
    if num_pathlines < 1:
        raise FlowDataError("num_pathlines must be >= 1")

    lo = np.array([d[0] for d in spec.domain], dtype=np.float64)
    hi = np.array([d[1] for d in spec.domain], dtype=np.float64)
    if seeds is None:
        rng = np.random.default_rng(seed)
        pos = lo + (hi - lo) * rng.random((num_pathlines, 3))
    else:
        pos = np.array(seeds, dtype=np.float64).reshape(num_pathlines, 3)

    t0, t1 = spec.time_span
    dt = (t1 - t0) / ((num_timesteps - 1) * substeps)
    out = np.empty((num_pathlines, num_timesteps, 3))
    out[:, 0] = pos
    clamped = np.zeros(num_pathlines, dtype=bool)
    for step in range(1, num_timesteps):
        for sub in range(substeps):
            t = t0 + ((step - 1) * substeps + sub) * dt
            k1 = spec.velocity(t, pos)
            k2 = spec.velocity(t + dt / 2, pos + dt / 2 * k1)
            k3 = spec.velocity(t + dt / 2, pos + dt / 2 * k2)
            k4 = spec.velocity(t + dt, pos + dt * k3)
            for kv in (k1, k2, k3, k4):
                if not np.all(np.isfinite(kv)):
                    row = int(np.argwhere(~np.isfinite(kv))[0, 0])
                    raise FlowDataError(f"non-finite velocity for pathline {row} at step {step}")
            pos = pos + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            outside = np.any((pos < lo) | (pos > hi), axis=1)
            if outside.any():
                clamped |= outside
                pos = np.clip(pos, lo, hi)
        out[:, step] = pos
    if clamped.any():
        log.info("%d of %d pathlines left the domain and were clamped", clamped.sum(), num_pathlines)
    # output cadence is uniform, so step indices normalize to the same parameters
    return PathlineSet(out, None, clamped)


# -----------------------------------------------------------------------------
# file I/O
# -----------------------------------------------------------------------------
def _format_of(path, fmt):
    if fmt is not None:
        fmt = fmt.lower()
        if fmt not in ("csv", "binary"):
            raise FlowDataError(f"unknown pathline format {fmt!r}")
        return fmt
    return "csv" if str(path).lower().endswith(".csv") else "binary"


def write_pathlines(pathlines, path, fmt=None):
    """Write ``pathlines`` as PLN1 binary or CSV (chosen by ``fmt`` or the suffix)."""
    if not isinstance(pathlines, PathlineSet) or pathlines.num_pathlines < 1:
        raise FlowDataError("cannot write an empty pathline set")
    path = Path(path)
    if _format_of(path, fmt) == "binary":
        header = PLN_HEADER.pack(PLN_MAGIC, PLN_VERSION, pathlines.num_pathlines,
                                 pathlines.num_timesteps, 0, PLN_HEADER.size)
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(pathlines.positions.astype("<f8").tobytes(order="C"))
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pathline_id", "step", "x", "y", "z"])
        for i, line in enumerate(pathlines.positions):
            for j, (x, y, z) in enumerate(line):
                w.writerow([i, j, repr(float(x)), repr(float(y)), repr(float(z))])


def read_pathlines(path, fmt=None):
    path = Path(path)
    if _format_of(path, fmt) == "binary":
        return _read_binary(path)
    return _read_csv(path)


def read_pln_header(path):
    with open(path, "rb") as fh:
        raw = fh.read(PLN_HEADER.size)
    if len(raw) < PLN_HEADER.size:
        raise FlowDataError(f"{path}: truncated PLN1 header")
    magic, version, npl, nst, reserved, offset = PLN_HEADER.unpack(raw)
    if magic != PLN_MAGIC:
        raise FlowDataError(f"{path}: bad magic {magic!r}, expected {PLN_MAGIC!r}")
    if version != PLN_VERSION:
        raise FlowDataError(f"{path}: unsupported PLN1 version {version}")
    return npl, nst, offset


def _read_binary(path):
    npl, nst, offset = read_pln_header(path)
    data = np.fromfile(path, dtype="<f8", offset=offset)
    if data.size != npl * nst * 3:
        raise FlowDataError(f"{path}: payload holds {data.size} values, expected {npl * nst * 3}")
    pos = data.reshape(npl, nst, 3).astype(np.float64)
    _check_nan(pos)
    return PathlineSet(pos)


def _check_nan(pos):
    bad = np.argwhere(~np.isfinite(pos))
    if bad.size:
        i, j, _ = bad[0]
        raise FlowDataError(f"NaN position at pathline {i}, step {j}")


def _read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["pathline_id", "step", "x", "y", "z"]:
            raise FlowDataError(f"{path}: expected header pathline_id,step,x,y,z")
        rows = [r for r in reader if r]
    if not rows:
        raise FlowDataError(f"{path}: no pathline rows")
    try:
        ids = np.array([int(r[0]) for r in rows])
        steps = np.array([int(r[1]) for r in rows])
        xyz = np.array([[float(v) for v in r[2:5]] for r in rows]).reshape(len(rows), 3)
    except ValueError as exc:
        raise FlowDataError(f"{path}: malformed row: {exc}") from None

    uniq, counts = np.unique(ids, return_counts=True)
    if np.any(counts != counts[0]):
        bad = uniq[np.argmax(counts != counts[0])]
        raise FlowDataError(f"{path}: ragged pathlines, pathline {bad} has a different step count")
    order = np.lexsort((steps, ids))
    nst = int(counts[0])
    pos = xyz[order].reshape(len(uniq), nst, 3)
    if not np.array_equal(steps[order].reshape(len(uniq), nst), np.tile(np.arange(nst), (len(uniq), 1))):
        raise FlowDataError(f"{path}: steps must run 0..{nst - 1} for every pathline")
    _check_nan(pos)
    return PathlineSet(pos)
