"""Point cloud and axis-aligned bounding box containers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError

UNIT_NORMAL_TOL = 1e-6


@dataclass
class PointCloud:
    """Ordered 3D points with optional unit normals and per-point attributes.

    points  : (n, 3) float64
    normals : (n, 3) float64 unit vectors, or None
    attrs   : (n, k) float64 free-form per-point payload, or None
    """

    points: np.ndarray
    normals: np.ndarray | None = None
    attrs: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise DataError(f"points must be (n, 3), got {self.points.shape}")
        if self.normals is not None:
            self.normals = np.ascontiguousarray(self.normals, dtype=np.float64)
            if self.normals.shape != self.points.shape:
                raise DataError(
                    f"normals shape {self.normals.shape} does not match points {self.points.shape}"
                )
        if self.attrs is not None:
            self.attrs = np.ascontiguousarray(self.attrs, dtype=np.float64)
            if self.attrs.ndim != 2 or len(self.attrs) != len(self.points):
                raise DataError("attrs must be (n, k) with one row per point")
        self.validate()

    def __len__(self) -> int:
        return len(self.points)

    def validate(self):
        """Raise DataError on non-finite coordinates or non-unit normals."""
        if not np.all(np.isfinite(self.points)):
            raise DataError("points contain non-finite values")
        if self.normals is not None:
            if not np.all(np.isfinite(self.normals)):
                raise DataError("normals contain non-finite values")
            lengths = np.linalg.norm(self.normals, axis=1)
            err = np.abs(lengths - 1.0)
            if err.size and err.max() > UNIT_NORMAL_TOL:
                raise DataError(
                    f"normals must be unit length within {UNIT_NORMAL_TOL}, worst error {err.max():.3g}"
                )
        if self.attrs is not None and not np.all(np.isfinite(self.attrs)):
            raise DataError("attrs contain non-finite values")

    def with_points(self, points: np.ndarray) -> "PointCloud":
        """New cloud with replaced coordinates; normals/attrs keep their row pairing."""
        return PointCloud(points=points, normals=self.normals, attrs=self.attrs)

    def subset(self, indices) -> "PointCloud":
        indices = np.asarray(indices, dtype=np.intp)
        return PointCloud(
            points=self.points[indices],
            normals=None if self.normals is None else self.normals[indices],
            attrs=None if self.attrs is None else self.attrs[indices],
        )


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned bounding box."""

    lo: np.ndarray
    hi: np.ndarray

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains(self, p: np.ndarray) -> bool:
        p = np.asarray(p, dtype=np.float64)
        return bool(np.all(p >= self.lo - 1e-12) and np.all(p <= self.hi + 1e-12))


def bounding_box(cloud) -> Aabb:
    """Aabb of a PointCloud or a raw (n, 3) array. Errors on an empty input."""
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    if pts.size == 0:
        raise DataError("bounding_box of an empty cloud")
    return Aabb(lo=pts.min(axis=0), hi=pts.max(axis=0))
