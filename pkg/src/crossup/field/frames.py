"""Per-point cross frames: a unit normal plus a unit tangent direction that is
identified with its rotations by multiples of 90 degrees about the normal."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError

ROSY_SYMMETRY = 4

# frame used when a predictor emits a zero normal and nothing better is known
DEFAULT_NORMAL = np.array([0.0, 0.0, 1.0])
DEFAULT_TANGENT = np.array([1.0, 0.0, 0.0])

_UNIT_TOL = 1e-9


@dataclass
class CrossFrame:
    """Unit normal n and unit tangent theta with n . theta = 0.

    Build via enforce_frame unless the inputs are already exactly orthonormal.
    """

    n: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        self.n = np.asarray(self.n, dtype=np.float64).reshape(3)
        self.theta = np.asarray(self.theta, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(self.n) - 1.0) > _UNIT_TOL:
            raise DataError("frame normal is not unit length")
        if abs(np.linalg.norm(self.theta) - 1.0) > _UNIT_TOL:
            raise DataError("frame tangent is not unit length")
        if abs(float(self.n @ self.theta)) > _UNIT_TOL:
            raise DataError("frame tangent is not orthogonal to the normal")


def enforce_frame(n, theta) -> CrossFrame:
    """Canonicalize (n, theta) into a valid CrossFrame.

    Normalizes n, projects theta onto the tangent plane and normalizes it.
    A tangent (near-)parallel to the normal falls back to the cross product
    with the axis of smallest |n| component, which is deterministic.
    """
    n = np.asarray(n, dtype=np.float64).reshape(3).copy()
    theta = np.asarray(theta, dtype=np.float64).reshape(3)
    norm_n = np.linalg.norm(n)
    if norm_n <= 1e-12:
        raise DataError("cannot build a frame from a zero normal")
    n /= norm_n
    t = theta - (theta @ n) * n
    norm_t = np.linalg.norm(t)
    if norm_t < 1e-8:
        axis = np.zeros(3)
        axis[int(np.argmin(np.abs(n)))] = 1.0
        t = np.cross(n, axis)
        norm_t = np.linalg.norm(t)
    return CrossFrame(n=n, theta=t / norm_t)


def default_frame() -> CrossFrame:
    return CrossFrame(n=DEFAULT_NORMAL.copy(), theta=DEFAULT_TANGENT.copy())


def rosy_rotate(frame: CrossFrame, k: int) -> np.ndarray:
    """Tangent rotated about the normal by k quarter turns (k mod 4)."""
    k = k % ROSY_SYMMETRY
    if k == 0:
        return frame.theta.copy()
    if k == 1:
        return np.cross(frame.n, frame.theta)
    if k == 2:
        return -frame.theta
    return -np.cross(frame.n, frame.theta)


def rosy_representatives(frame: CrossFrame) -> np.ndarray:
    """All four tangents of the cross, shape (4, 3)."""
    t1 = np.cross(frame.n, frame.theta)
    return np.stack([frame.theta, t1, -frame.theta, -t1])


def frames_to_arrays(frames) -> tuple[np.ndarray, np.ndarray]:
    """(normals (m, 3), tangents (m, 3)) from a sequence of CrossFrame."""
    normals = np.stack([f.n for f in frames])
    tangents = np.stack([f.theta for f in frames])
    return normals, tangents
