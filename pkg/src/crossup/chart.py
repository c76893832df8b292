"""Local tangent charts: frame matrices, voxelized neighborhoods, tangent grids.

A chart at point p with cross frame (theta, n) maps world points through the
rotation whose columns are [theta, n x theta, n]; chart coordinates are the
dot products with those axes. The chart covers the cube [-r, r]^3 discretized
into d x d x d voxels of spacing 2r/d (d odd), and its tangent grid is the
d x d slab of voxel centers at height zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .field.frames import CrossFrame

_ORTHO_TOL = 1e-9


@dataclass
class LocalFrameMatrix:
    """Right-handed orthonormal chart basis plus its world-space origin."""

    rotation: np.ndarray  # (3, 3), columns [theta, n x theta, n]
    origin: np.ndarray  # (3,)

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        if err > _ORTHO_TOL:
            raise DataError(f"chart basis is not orthonormal (deviation {err:.3g})")
        if np.linalg.det(self.rotation) < 0:
            raise DataError("chart basis is left-handed")

    @classmethod
    def from_frame(cls, frame: CrossFrame, origin) -> "LocalFrameMatrix":
        r = np.column_stack([frame.theta, np.cross(frame.n, frame.theta), frame.n])
        return cls(rotation=r, origin=origin)


def to_chart(points, frame: LocalFrameMatrix) -> np.ndarray:
    """World -> chart coordinates: (p - origin) projected on the frame axes."""
    p = np.asarray(points, dtype=np.float64)
    return (p - frame.origin) @ frame.rotation


def from_chart(coords, frame: LocalFrameMatrix) -> np.ndarray:
    """Chart -> world coordinates, exact inverse of to_chart (basis transpose)."""
    q = np.asarray(coords, dtype=np.float64)
    return q @ frame.rotation.T + frame.origin


@dataclass
class VoxelGrid:
    """Occupancy + per-voxel features over the chart cube.

    features[ix, iy, iz] averages the feature rows of every point assigned to
    that voxel; unoccupied voxels stay zero.
    """

    d: int
    spacing: float
    occupancy: np.ndarray  # (d, d, d) bool
    features: np.ndarray  # (d, d, d, c) float64
    counts: np.ndarray  # (d, d, d) int

    @property
    def extent(self) -> float:
        # half-width of the covered cube: d voxels of width `spacing`
        return 0.5 * self.d * self.spacing

    def voxel_center(self, ix: int, iy: int, iz: int) -> np.ndarray:
        half = (self.d - 1) // 2
        return self.spacing * (np.array([ix, iy, iz], dtype=np.float64) - half)


def voxel_assignment(coords: np.ndarray, d: int, spacing: float):
    """Nearest-voxel index per chart point.

    Returns (indices (n, 3) int, inside (n,) bool). A point is inside when its
    nearest voxel center is a valid index; rounding is floor(x/s + 0.5), which
    sends exact half-spacing boundaries toward the higher index.
    """
    if d < 1 or d % 2 == 0:
        raise DataError(f"voxel grid dimension must be odd and positive, got {d}")
    if spacing <= 0:
        raise DataError(f"voxel spacing must be positive, got {spacing}")
    c = np.asarray(coords, dtype=np.float64).reshape(-1, 3)
    half = (d - 1) // 2
    rel = np.floor(c / spacing + 0.5).astype(np.int64)
    inside = np.all(np.abs(rel) <= half, axis=1)
    return rel + half, inside


def scatter_to_voxels(coords: np.ndarray, features: np.ndarray, d: int, spacing: float) -> VoxelGrid:
    """Scatter chart-space points and their feature rows into a VoxelGrid.

    Each point lands in the voxel with the nearest center; collisions average;
    points outside the grid are dropped.
    """
    c = np.asarray(coords, dtype=np.float64).reshape(-1, 3)
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2 or len(f) != len(c):
        raise DataError("features must be (n, c) matching the points")
    idx, inside = voxel_assignment(c, d, spacing)
    idx = idx[inside]
    f = f[inside]
    width = f.shape[1]
    sums = np.zeros((d, d, d, width))
    counts = np.zeros((d, d, d), dtype=np.int64)
    flat = (idx[:, 0] * d + idx[:, 1]) * d + idx[:, 2]
    np.add.at(sums.reshape(-1, width), flat, f)
    np.add.at(counts.reshape(-1), flat, 1)
    occ = counts > 0
    feats = np.zeros_like(sums)
    feats[occ] = sums[occ] / counts[occ][:, None]
    return VoxelGrid(d=d, spacing=spacing, occupancy=occ, features=feats, counts=counts)


def tangent_grid_points(d: int, spacing: float) -> np.ndarray:
    """(d*d, 3) tangent-plane sample positions: voxel centers at height zero,
    ordered x-major (index = ix * d + iy)."""
    if d < 1 or d % 2 == 0:
        raise DataError(f"tangent grid dimension must be odd, got {d}")
    half = (d - 1) // 2
    axis = spacing * (np.arange(d, dtype=np.float64) - half)
    xs, ys = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([xs.ravel(), ys.ravel(), np.zeros(d * d)])


@dataclass
class TangentGrid:
    """Per-cell features over the d x d tangent grid (cell order matches
    tangent_grid_points)."""

    d: int
    spacing: float
    features: np.ndarray  # (d, d, w)

    def cell_positions(self) -> np.ndarray:
        return tangent_grid_points(self.d, self.spacing)


@dataclass
class TangentSample:
    """One tangent-plane sample through the mapping pipeline."""

    position: np.ndarray  # (2,) tangent coordinates
    feature: np.ndarray  # (w,)
    offset: np.ndarray | None = None  # (3,) chart-space displacement
    moved: np.ndarray | None = None  # (3,) chart-space position + offset


def bilinear_feature(grid: TangentGrid, position) -> np.ndarray:
    """Feature at an arbitrary tangent position by bilinear interpolation.

    Positions are clamped to the grid hull; querying an exact cell position
    returns that cell's stored feature row.
    """
    p = np.asarray(position, dtype=np.float64).reshape(-1)[:2]
    return bilinear_features(grid, p[None, :])[0]


def bilinear_features(grid: TangentGrid, positions: np.ndarray) -> np.ndarray:
    """Vectorized bilinear_feature for (n, 2) positions -> (n, w)."""
    d = grid.d
    half = (d - 1) // 2
    p = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    u = p / grid.spacing + half  # continuous cell coordinates in [0, d-1]
    # snap to exact cells so stored features are reproduced bit-for-bit
    near = np.round(u)
    snap = np.abs(u - near) < 1e-9
    u = np.where(snap, near, u)
    u = np.clip(u, 0.0, d - 1.0)
    i0 = np.minimum(np.floor(u).astype(np.int64), d - 2) if d > 1 else np.zeros_like(u, dtype=np.int64)
    frac = u - i0
    f = grid.features
    fx0y0 = f[i0[:, 0], i0[:, 1]]
    if d == 1:
        return fx0y0.copy()
    fx1y0 = f[i0[:, 0] + 1, i0[:, 1]]
    fx0y1 = f[i0[:, 0], i0[:, 1] + 1]
    fx1y1 = f[i0[:, 0] + 1, i0[:, 1] + 1]
    wx = frac[:, 0][:, None]
    wy = frac[:, 1][:, None]
    return (
        fx0y0 * (1 - wx) * (1 - wy)
        + fx1y0 * wx * (1 - wy)
        + fx0y1 * (1 - wx) * wy
        + fx1y1 * wx * wy
    )


def chart_debug_dump(frame: LocalFrameMatrix, grid: VoxelGrid, samples) -> str:
    """Plain-text snapshot of one chart: frame, occupied voxels, tangent samples."""
    lines = ["chart"]
    lines.append("origin " + " ".join(f"{v:.9g}" for v in frame.origin))
    for name, row in zip(("theta", "binormal", "normal"), frame.rotation.T):
        lines.append(f"{name} " + " ".join(f"{v:.9g}" for v in row))
    lines.append(f"voxels d={grid.d} spacing={grid.spacing:.9g}")
    occ = np.argwhere(grid.occupancy)
    for ix, iy, iz in occ:
        feat = " ".join(f"{v:.9g}" for v in grid.features[ix, iy, iz])
        lines.append(f"voxel {ix} {iy} {iz} count={grid.counts[ix, iy, iz]} {feat}")
    lines.append(f"samples {len(samples)}")
    for s in samples:
        pos = " ".join(f"{v:.9g}" for v in s.position)
        row = f"sample {pos}"
        if s.offset is not None:
            row += " offset " + " ".join(f"{v:.9g}" for v in s.offset)
        if s.moved is not None:
            row += " moved " + " ".join(f"{v:.9g}" for v in s.moved)
        lines.append(row)
    return "\n".join(lines) + "\n"
