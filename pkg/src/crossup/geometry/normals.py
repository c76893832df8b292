"""PCA normal estimation."""
from __future__ import annotations

import numpy as np

from ..errors import DataError, DegenerateNeighborhoodError
from .index import SpatialIndex, knn_batch

# eigenvalue ratio below which the tangent plane is considered degenerate
_DEGENERATE_RATIO = 1e-12


def _canonical_sign(normal: np.ndarray) -> np.ndarray:
    # sign convention: largest-magnitude component positive (first on ties)
    i = int(np.argmax(np.abs(normal)))
    return -normal if normal[i] < 0 else normal


def pca_normal(neighborhood):
    """Normal of a local neighborhood via PCA.

    Returns (normal, confidence): the unit eigenvector of the smallest
    covariance eigenvalue, sign-canonicalized so its largest-magnitude
    component is positive, and confidence = 1 - lambda_min / lambda_mid
    (0 when the neighborhood is degenerate, e.g. collinear).
    """
    pts = np.asarray(
        neighborhood.points if hasattr(neighborhood, "points") else neighborhood,
        dtype=np.float64,
    )
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DataError(f"neighborhood must be (n, 3), got {pts.shape}")
    if len(pts) < 3:
        raise DataError(f"pca_normal needs >= 3 points, got {len(pts)}")
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / len(pts)
    if np.trace(cov) <= 1e-24:
        raise DegenerateNeighborhoodError("all neighborhood points coincide")
    w, v = np.linalg.eigh(cov)  # ascending eigenvalues
    normal = _canonical_sign(v[:, 0].copy())
    if w[1] <= _DEGENERATE_RATIO * max(w[2], 1e-300):
        confidence = 0.0
    else:
        confidence = float(np.clip(1.0 - w[0] / w[1], 0.0, 1.0))
    return normal, confidence


def estimate_normals(points: np.ndarray, index: SpatialIndex, k: int = 16):
    """Batched PCA normals for every point of a cloud.

    Neighborhoods are the k nearest points (self included). Returns
    (normals (n, 3), confidences (n,)) with the canonical sign convention.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    kk = min(k, n)
    if kk < 3:
        raise DataError(f"estimate_normals needs clouds of >= 3 points, got {n}")
    idx, _ = knn_batch(index, pts, kk)
    nbr = index.points[idx]  # (n, kk, 3)
    centered = nbr - nbr.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / kk
    w, v = np.linalg.eigh(cov)
    normals = v[:, :, 0].copy()
    # canonical sign, vectorized
    comp = np.take_along_axis(
        normals, np.argmax(np.abs(normals), axis=1)[:, None], axis=1
    )[:, 0]
    normals[comp < 0] *= -1.0
    lam_mid = np.maximum(w[:, 1], 1e-300)
    conf = np.clip(1.0 - w[:, 0] / lam_mid, 0.0, 1.0)
    conf[w[:, 1] <= _DEGENERATE_RATIO * np.maximum(w[:, 2], 1e-300)] = 0.0
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    normals /= np.maximum(lengths, 1e-300)
    return normals, conf


def orient_away_from_centroid(points: np.ndarray, normals: np.ndarray, index: SpatialIndex, k: int = 16):
    """Flip normals so each one points away from its local neighborhood centroid.

    Frame-relative orientation rule: it commutes with rigid motions, unlike the
    world-axis canonical sign, so chart frames built on top of it are
    equivariant. Points whose neighborhood centroid coincides with the point
    keep the incoming sign.
    """
    pts = np.asarray(points, dtype=np.float64)
    out = np.array(normals, dtype=np.float64, copy=True)
    kk = min(k, len(pts))
    idx, _ = knn_batch(index, pts, kk)
    centroid = index.points[idx].mean(axis=1)
    inward = np.einsum("ij,ij->i", out, centroid - pts)
    out[inward > 0] *= -1.0
    return out
