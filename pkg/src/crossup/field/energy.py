"""Cross-field energies: normal alignment, tangent orthogonality, smoothness.

The pairwise smoothness term treats tangents as 4-fold rotationally symmetric:
it is the smaller of 1 - |cos| between the two tangents and between one
tangent's quarter-turn and the other. The absolute values fold the remaining
two rotations in, so the term is 0 exactly when the crosses agree up to a
quarter turn, and peaks at 1 - sqrt(2)/2 at 45 degrees.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from ..geometry import SpatialIndex, knn_batch
from .frames import frames_to_arrays

_EPS = 1e-300


@dataclass
class FieldEnergyReport:
    """Energy terms plus the per-point smoothness residuals (summed over each
    point's neighbors)."""

    normal_loss: float
    ortho_loss: float
    smooth_loss: float
    smooth_residuals: np.ndarray

    @property
    def total(self) -> float:
        return self.normal_loss + self.ortho_loss + self.smooth_loss


def pairwise_smooth_loss(frame_a, frame_b) -> float:
    """Smoothness between two cross frames (symmetric when normals agree)."""
    a = frame_a.theta
    b = frame_b.theta
    ra = np.cross(frame_a.n, a)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    nra = np.linalg.norm(ra)
    branch0 = 1.0 - abs(float(a @ b)) / max(na * nb, _EPS)
    branch1 = 1.0 - abs(float(ra @ b)) / max(nra * nb, _EPS)
    # |cos| can exceed 1 by ~1e-16 for unit vectors; keep the loss non-negative
    return max(0.0, min(branch0, branch1))


def _pairwise_smooth_batch(theta_a, n_a, theta_b):
    """Vectorized pairwise smoothness: theta_a/n_a (m, 3), theta_b (m, k, 3)."""
    rot_a = np.cross(n_a, theta_a)
    na = np.linalg.norm(theta_a, axis=1)[:, None]
    nra = np.linalg.norm(rot_a, axis=1)[:, None]
    nb = np.linalg.norm(theta_b, axis=2)
    dots0 = np.abs(np.einsum("mi,mki->mk", theta_a, theta_b))
    dots1 = np.abs(np.einsum("mi,mki->mk", rot_a, theta_b))
    b0 = 1.0 - dots0 / np.maximum(na * nb, _EPS)
    b1 = 1.0 - dots1 / np.maximum(nra * nb, _EPS)
    return np.maximum(0.0, np.minimum(b0, b1))


def neighbor_graph(points: np.ndarray, k: int, index: SpatialIndex | None = None) -> np.ndarray:
    """(m, k) nearest-neighbor indices excluding self."""
    pts = np.asarray(points, dtype=np.float64)
    if index is None:
        index = SpatialIndex(pts)
    kk = min(k + 1, len(pts))
    idx, _ = knn_batch(index, pts, kk)
    rows = []
    for i in range(len(pts)):
        row = idx[i][idx[i] != i][: k]
        rows.append(row)
    width = min(k, len(pts) - 1)
    return np.asarray([r[:width] for r in rows], dtype=np.intp)


def field_energy(cloud, frames, gt_normals=None, k1: int = 6, graph=None) -> FieldEnergyReport:
    """Total field energy of `frames` over `cloud`.

    normal_loss: sum of 1 - |cos| between frame normals and gt normals
    (0 when gt_normals is None). ortho_loss: sum of |n . theta| per frame.
    smooth_loss: pairwise smoothness summed over each point's k1 nearest
    neighbors (self excluded).
    """
    points = cloud.points if hasattr(cloud, "points") else np.asarray(cloud, dtype=np.float64)
    if len(frames) != len(points):
        raise DataError("one frame per point required")
    normals, thetas = frames_to_arrays(frames)
    if graph is None:
        graph = neighbor_graph(points, k1)
    nbr_thetas = thetas[graph]
    pair = _pairwise_smooth_batch(thetas, normals, nbr_thetas)
    residuals = pair.sum(axis=1)
    smooth = float(residuals.sum())
    ortho = float(np.abs(np.einsum("ij,ij->i", normals, thetas)).sum())
    if gt_normals is None:
        normal_loss = 0.0
    else:
        gt = np.asarray(gt_normals, dtype=np.float64)
        if gt.shape != normals.shape:
            raise DataError("gt_normals shape mismatch")
        num = np.abs(np.einsum("ij,ij->i", normals, gt))
        den = np.maximum(np.linalg.norm(normals, axis=1) * np.linalg.norm(gt, axis=1), _EPS)
        normal_loss = float(np.sum(np.maximum(0.0, 1.0 - num / den)))
    return FieldEnergyReport(
        normal_loss=normal_loss,
        ortho_loss=ortho,
        smooth_loss=smooth,
        smooth_residuals=residuals,
    )
