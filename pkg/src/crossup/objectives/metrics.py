"""Evaluation metrics: chamfer, Hausdorff, point-to-face, uniformity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..errors import DataError
from ..geometry import PointCloud, TriangleMesh, point_triangle_distances


def _points(x) -> np.ndarray:
    pts = x.points if isinstance(x, PointCloud) else np.asarray(x, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
        raise DataError(f"expected a non-empty (n, 3) point set, got shape {pts.shape}")
    return pts


def nearest_squared_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """For each point of a, squared distance to its nearest point of b."""
    d, _ = cKDTree(b).query(a, k=1)
    return np.asarray(d, dtype=np.float64) ** 2


def chamfer(a, b, reduction: str = "mean") -> float:
    """Symmetric squared-distance chamfer between two clouds.

    reduction="sum": sum of both directional sums (the loss form).
    reduction="mean": each direction averaged over its own source count, then
    added (the reported-metric form).
    """
    pa, pb = _points(a), _points(b)
    d_ab = nearest_squared_distances(pa, pb)
    d_ba = nearest_squared_distances(pb, pa)
    if reduction == "sum":
        return float(d_ab.sum() + d_ba.sum())
    if reduction == "mean":
        return float(d_ab.mean() + d_ba.mean())
    raise DataError(f"unknown chamfer reduction '{reduction}'")


def hausdorff(a, b) -> float:
    """Symmetric Hausdorff distance (not squared)."""
    pa, pb = _points(a), _points(b)
    d_ab = np.sqrt(nearest_squared_distances(pa, pb))
    d_ba = np.sqrt(nearest_squared_distances(pb, pa))
    return float(max(d_ab.max(), d_ba.max()))


def p2f(points, mesh: TriangleMesh) -> float:
    """Mean exact point-to-surface distance."""
    pts = _points(points)
    return float(point_triangle_distances(pts, mesh).mean())


def uni_metric(upsampled, dense_reference) -> float:
    """Coverage uniformity: assign each dense reference point to its nearest
    upsampled point and average the summed distances over the upsampled count.

    Lower is better; equal distances make the assignment ambiguous but not the
    value, and the nearest-index tie goes to the lower index.
    """
    y = _points(upsampled)
    yd = _points(dense_reference)
    d, _ = cKDTree(y).query(yd, k=1)
    return float(np.sum(d) / len(y))


@dataclass
class MetricReport:
    """One evaluation row; `record` renders the machine-readable line."""

    name: str
    cd: float
    hd: float
    p2f: float | None
    uni: float | None
    ref_count: int  # m: reference points compared against
    pred_count: int  # M: predicted points
    seed: int

    def record(self) -> str:
        def fmt(v):
            return "nan" if v is None else "%.9g" % v

        return (
            f"{self.name} {fmt(self.cd)} {fmt(self.hd)} {fmt(self.p2f)} "
            f"{fmt(self.uni)} {self.ref_count} {self.pred_count} {self.seed}"
        )


def evaluate_cloud(
    name: str,
    predicted,
    gt_points,
    gt_mesh: TriangleMesh | None = None,
    dense_reference=None,
    seed: int = 0,
) -> MetricReport:
    """Assemble the standard metric row for one predicted cloud.

    cd and hd compare against gt_points (mean reductions); p2f needs the
    source mesh; uni needs a dense reference sampling of the surface.
    """
    pred = _points(predicted)
    gt = _points(gt_points)
    return MetricReport(
        name=name,
        cd=chamfer(pred, gt, reduction="mean"),
        hd=hausdorff(pred, gt),
        p2f=p2f(pred, gt_mesh) if gt_mesh is not None else None,
        uni=uni_metric(pred, dense_reference) if dense_reference is not None else None,
        ref_count=len(gt),
        pred_count=len(pred),
        seed=seed,
    )
