"""
Exact K-nearest-neighbor search over 3D points and inverse distance weights.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

DEFAULT_K = 8
DEFAULT_POWER = 2.0
SNAP_FRACTION = 1e-12


class NeighborError(ValueError):
    pass


class NeighborIndex:
    """Balanced k-d tree (median splits) over points tagged with owner ids.

    Queries are exact and return neighbors ordered by distance, ties going to
    the lower owner id. Under the numpy backend the tree is not built and
    queries fall back to an equivalent vectorized scan.
    """

    def __init__(self, points, owners=None, leaf_size=_kernels.LEAF_SIZE):
        pts = np.ascontiguousarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise NeighborError(f"points must have shape (N, 3), got {pts.shape}")
        if len(pts) == 0:
            raise NeighborError("cannot index an empty point set")
        bad = np.argwhere(~np.isfinite(pts))
        if bad.size:
            raise NeighborError(f"non-finite point at index {bad[0, 0]}")
        self.points = pts
        self.owners = (np.arange(len(pts), dtype=np.int64) if owners is None
                       else np.ascontiguousarray(owners, dtype=np.int64))
        self.tree = _kernels.build_tree(pts, leaf_size) if _kernels.backend() == "numba" else None

    def __len__(self):
        return len(self.points)

    def query(self, queries, K=DEFAULT_K):
        """Batched query: owner ids ``(q, K')`` and distances ``(q, K')``, ``K' = min(K, N)``."""
        if K < 1:
            raise NeighborError("K must be >= 1")
        kk = min(int(K), len(self.points))
        tree = None
        if _kernels.backend() == "numba":
            if self.tree is None:  # built under the numpy backend
                self.tree = _kernels.build_tree(self.points)
            tree = self.tree
        idx, d2 = _kernels.knn(self.points, self.owners, queries, kk, tree)
        return self.owners[idx], np.sqrt(d2)


def build_index(points, owners=None):
    return NeighborIndex(points, owners)


def knn(index, q, K=DEFAULT_K):
    """The ``K`` nearest neighbors of one point as ``[(owner, distance), ...]``."""
    owners, dist = index.query(np.asarray(q, dtype=np.float64).reshape(1, 3), K)
    return list(zip(owners[0].tolist(), dist[0].tolist()))


@dataclass(frozen=True)
class NeighborWeights:
    owners: np.ndarray
    weights: np.ndarray
    query_point: np.ndarray = None


def idw_weights(neighbors, power=DEFAULT_POWER, snap=0.0, query_point=None):
    """Normalized inverse distance weights ``d_i^-p / sum_j d_j^-p``.

    ``neighbors`` is a list of ``(owner, distance)`` pairs. A neighbor closer
    than ``snap`` (pass ``1e-12 * dataset diameter``) takes the whole weight.
    """
    if len(neighbors) == 0:
        raise NeighborError("IDW needs at least one neighbor")
    owners = np.array([o for o, _ in neighbors], dtype=np.int64)
    dist = np.array([d for _, d in neighbors], dtype=np.float64)
    w = idw_weight_matrix(dist[None, :], power, snap)[0]
    return NeighborWeights(owners, w, query_point)


def idw_weight_matrix(dist, power=DEFAULT_POWER, snap=0.0):
    """Row-wise IDW weights for a ``(q, K)`` distance matrix sorted ascending per row."""
    if power <= 0:
        raise NeighborError("IDW power must be positive")
    dist = np.asarray(dist, dtype=np.float64)
    if dist.shape[-1] == 0:
        raise NeighborError("IDW needs at least one neighbor")
    close = dist <= snap
    with np.errstate(divide="ignore"):
        w = np.where(close, 0.0, dist ** -power)
    snapped = close.any(axis=1)
    if snapped.any():
        # one-hot on the first (nearest, lowest owner) coincident neighbor
        first = np.argmax(close[snapped], axis=1)
        w[snapped] = 0.0
        w[np.nonzero(snapped)[0], first] = 1.0
    return w / w.sum(axis=1, keepdims=True)
