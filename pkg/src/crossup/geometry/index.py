"""Nearest-neighbor queries and farthest point sampling.

All queries are deterministic: equal distances are resolved toward the lower
point index, and farthest point sampling breaks argmax ties the same way.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ..errors import DataError, EmptyIndexError
from .cloud import PointCloud

# extra candidates fetched so that equal-distance boundary ties can be resolved
# by index before truncating to k
_TIE_PAD = 8


class SpatialIndex:
    """Immutable nearest-neighbor index over a fixed point set."""

    def __init__(self, points):
        pts = points.points if isinstance(points, PointCloud) else np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise DataError(f"index points must be (n, 3), got {pts.shape}")
        if len(pts) == 0:
            raise EmptyIndexError("cannot build a spatial index over an empty cloud")
        self._points = np.ascontiguousarray(pts, dtype=np.float64)
        self._tree = cKDTree(self._points)

    @property
    def points(self) -> np.ndarray:
        return self._points

    def __len__(self) -> int:
        return len(self._points)


def _order_by_distance_then_index(dist: np.ndarray, idx: np.ndarray):
    order = np.lexsort((idx, dist))
    return dist[order], idx[order]


def knn(index: SpatialIndex, query, k: int):
    """k nearest neighbors of `query`, nearest first.

    Returns (indices, distances) of length min(k, n). Ties on distance are
    broken by the lower point index.
    """
    if not isinstance(index, SpatialIndex):
        raise DataError("knn expects a SpatialIndex")
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    q = np.asarray(query, dtype=np.float64).reshape(3)
    n = len(index)
    kq = min(n, k + _TIE_PAD)
    dist, idx = index._tree.query(q, k=kq)
    dist = np.atleast_1d(np.asarray(dist, dtype=np.float64))
    idx = np.atleast_1d(np.asarray(idx, dtype=np.intp))
    dist, idx = _order_by_distance_then_index(dist, idx)
    keep = min(n, k)
    return idx[:keep].copy(), dist[:keep].copy()


def knn_batch(index: SpatialIndex, queries: np.ndarray, k: int):
    """Vectorized knn for (m, 3) queries -> (indices (m, k'), distances (m, k'))."""
    q = np.asarray(queries, dtype=np.float64)
    n = len(index)
    kq = min(n, k + _TIE_PAD)
    dist, idx = index._tree.query(q, k=kq)
    dist = dist.reshape(len(q), kq)
    idx = idx.reshape(len(q), kq).astype(np.intp)
    order = np.lexsort((idx, dist), axis=1)
    dist = np.take_along_axis(dist, order, axis=1)
    idx = np.take_along_axis(idx, order, axis=1)
    keep = min(n, k)
    return idx[:, :keep], dist[:, :keep]


def radius_neighbors(index: SpatialIndex, query, radius: float, cap: int):
    """Neighbors within `radius`, nearest first, truncated to `cap` results.

    Sparse fallback: when fewer than 4 points lie inside the radius the query
    degrades to plain knn with k = cap so downstream charts keep minimal support.
    """
    if radius <= 0:
        raise DataError(f"radius must be positive, got {radius}")
    if cap < 1:
        raise DataError(f"cap must be >= 1, got {cap}")
    q = np.asarray(query, dtype=np.float64).reshape(3)
    hits = index._tree.query_ball_point(q, r=radius)
    hits = np.asarray(hits, dtype=np.intp)
    if len(hits) < 4:
        return knn(index, q, cap)
    dist = np.linalg.norm(index._points[hits] - q, axis=1)
    dist, hits = _order_by_distance_then_index(dist, hits)
    return hits[:cap].copy(), dist[:cap].copy()


def fps(points, k: int, seed_index: int = 0) -> np.ndarray:
    """Farthest point sampling: k indices, first one `seed_index`.

    Each subsequent pick maximizes the minimum distance to the already-selected
    set; argmax ties resolve to the lowest index. Deterministic.
    """
    pts = points.points if isinstance(points, PointCloud) else np.asarray(points, dtype=np.float64)
    n = len(pts)
    if n == 0:
        raise DataError("fps on an empty cloud")
    if k < 1 or k > n:
        raise DataError(f"fps size k={k} out of range for cloud of {n} points")
    if not (0 <= seed_index < n):
        raise DataError(f"fps seed_index {seed_index} out of range")
    selected = np.empty(k, dtype=np.intp)
    selected[0] = seed_index
    # squared distances preserve the argmax
    d = np.sum((pts - pts[seed_index]) ** 2, axis=1)
    for i in range(1, k):
        nxt = int(np.argmax(d))
        selected[i] = nxt
        np.minimum(d, np.sum((pts - pts[nxt]) ** 2, axis=1), out=d)
    return selected
