"""Differentiable training objectives over the autodiff engine.

The one-pass loss combines normal alignment, field/normal orthogonality,
field smoothness and a chamfer term; the uniform loss adds a chamfer pull
between the ground truth and the refined input positions. All terms are
tensor-valued so gradients reach every weight group.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from ..nn import tensor as T
from ..nn.tensor import Tensor

# keeps norms differentiable at zero vectors without visibly moving values
_NORM_EPS = 1e-24


def _norm_rows(x: Tensor) -> Tensor:
    return T.tsqrt(T.tsum(x * x, axis=x.ndim - 1) + _NORM_EPS)


def normal_alignment_loss(pred: Tensor, gt: np.ndarray) -> Tensor:
    """Sum over points of 1 - |cos| between predicted and reference normals."""
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise DataError(f"normal shapes differ: {pred.shape} vs {gt.shape}")
    dots = T.tabs(T.tsum(pred * T.constant(gt), axis=1))
    denom = _norm_rows(pred) * T.constant(np.linalg.norm(gt, axis=1))
    return T.tsum(T.constant(np.ones(len(gt))) - dots / denom)


def orthogonality_loss(normals: Tensor, thetas: Tensor) -> Tensor:
    """Sum of |<n, theta>| per point (raw dot products, no normalization)."""
    return T.tsum(T.tabs(T.tsum(normals * thetas, axis=1)))


def smoothness_loss(thetas: Tensor, normals: Tensor, neighbor_idx: np.ndarray) -> Tensor:
    """Pairwise 4-fold smoothness summed over a fixed neighbor graph.

    For each point i and neighbor j: min over {theta_i, quarter-turn of
    theta_i} of 1 - |cos| against theta_j, with norms in the denominators.
    """
    idx = np.asarray(neighbor_idx, dtype=np.intp)
    m, k = idx.shape
    rot = T.cross(normals, thetas)  # (m, 3)
    nbr = T.gather_rows(thetas, idx.ravel())  # (m*k, 3)
    base = T.gather_rows(thetas, np.repeat(np.arange(m), k))  # aligned rows
    base_rot = T.gather_rows(rot, np.repeat(np.arange(m), k))

    nbr_norm = _norm_rows(nbr)
    dots0 = T.tabs(T.tsum(base * nbr, axis=1))
    dots1 = T.tabs(T.tsum(base_rot * nbr, axis=1))
    ones = T.constant(np.ones(m * k))
    b0 = ones - dots0 / (_norm_rows(base) * nbr_norm)
    b1 = ones - dots1 / (_norm_rows(base_rot) * nbr_norm)
    return T.tsum(T.minimum(b0, b1))


def chamfer_loss(pred: Tensor, gt: np.ndarray) -> Tensor:
    """Squared-distance chamfer (sum form) between a tensor cloud and a fixed
    reference; gradients flow to the nearest-pair matches."""
    gt = np.asarray(gt, dtype=np.float64)
    if pred.ndim != 2 or pred.shape[1] != 3 or gt.ndim != 2 or gt.shape[1] != 3:
        raise DataError("chamfer_loss expects (n, 3) clouds")
    p2 = T.tsum(pred * pred, axis=1, keepdims=True)  # (n, 1)
    g2 = T.constant((gt * gt).sum(axis=1)[None, :])  # (1, k)
    cross = T.matmul(pred, T.constant(gt.T))  # (n, k)
    sq = p2 + g2 - 2.0 * cross
    return T.tsum(T.tmin(sq, axis=1)) + T.tsum(T.tmin(sq, axis=0))


def uniform_loss(gt: np.ndarray, refined: Tensor) -> Tensor:
    """Chamfer pull between the reference cloud and the refined input points."""
    return chamfer_loss(refined, gt)


@dataclass
class PredictionBundle:
    """Everything one forward pass produced that the losses consume."""

    normals: Tensor  # (m, 3) raw normal head
    thetas: Tensor  # (m, 3) raw tangent head
    upsampled: Tensor  # (n, 3) world-space moved samples
    neighbor_idx: np.ndarray  # (m, k1) field smoothness graph
    input_normals: np.ndarray | None = None  # (m, 3) reference normals
    refined: Tensor | None = None  # (m, 3) updated input positions


@dataclass
class LossBreakdown:
    """Scalar components plus the weighted total (floats mirror the tensor)."""

    normal: float
    field_normal: float
    field_smooth: float
    cd: float
    uniform: float
    lambda0: float
    lambda1: float
    lambda_u: float
    total: float
    total_tensor: Tensor | None = None

    def recompose(self) -> float:
        return (
            self.normal
            + self.lambda0 * self.field_normal
            + self.field_smooth
            + self.lambda1 * self.cd
            + self.lambda_u * self.uniform
        )


def one_pass_loss(
    bundle: PredictionBundle,
    gt_points: np.ndarray,
    lambda0: float = 0.1,
    lambda1: float = 200.0,
    lambda_u: float = 0.4,
    include_uniform: bool = False,
) -> LossBreakdown:
    """Weighted sum: normal + lambda0 * orthogonality + smoothness
    + lambda1 * chamfer, optionally + lambda_u * chamfer(gt, refined).

    The normal term is skipped (0) when the bundle carries no reference
    normals. Fully differentiable through the engine when inputs are tracked.
    """
    gt = np.asarray(gt_points, dtype=np.float64)
    if bundle.input_normals is not None:
        l_normal = normal_alignment_loss(bundle.normals, bundle.input_normals)
    else:
        l_normal = T.constant(0.0)
    l_ortho = orthogonality_loss(bundle.normals, bundle.thetas)
    l_smooth = smoothness_loss(bundle.thetas, bundle.normals, bundle.neighbor_idx)
    l_cd = chamfer_loss(bundle.upsampled, gt)
    total = l_normal + lambda0 * l_ortho + l_smooth + lambda1 * l_cd
    if include_uniform:
        if bundle.refined is None:
            raise DataError("uniform term requested but bundle.refined is missing")
        l_uni = uniform_loss(gt, bundle.refined)
        total = total + lambda_u * l_uni
        uniform_val = float(l_uni.data)
    else:
        uniform_val = 0.0
    return LossBreakdown(
        normal=float(l_normal.data),
        field_normal=float(l_ortho.data),
        field_smooth=float(l_smooth.data),
        cd=float(l_cd.data),
        uniform=uniform_val,
        lambda0=lambda0,
        lambda1=lambda1,
        lambda_u=lambda_u if include_uniform else 0.0,
        total=float(total.data),
        total_tensor=total,
    )
