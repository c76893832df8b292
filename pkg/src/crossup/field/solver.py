"""Direct cross-field optimizer: coarse-to-fine sweeps over per-point tangents.

A single resolution of local averaging cannot rotate a whole flat region
toward the directions its boundary wants within a handful of sweeps, so the
solver works over a nested hierarchy of subsets (prefixes of one farthest
point ordering). The coarsest subset is solved from a seeded random start,
each finer subset inherits tangents from its nearest coarser point, and a few
sweeps per level polish the result.

Within a sweep each point gathers one representative per neighbor: whichever
of the neighbor's tangent or its quarter turn best lines up with the current
tangent, sign-folded. Representatives are weighted by the square of that
alignment, which silences near-orthogonal votes. Without the weighting,
points beside two meeting sharp features average full-length orthogonal
votes and settle on diagonal compromises.
"""
from __future__ import annotations

import numpy as np

from ..errors import DataError
from ..geometry import SpatialIndex, fps, knn_batch
from .energy import field_energy, neighbor_graph
from .frames import CrossFrame, enforce_frame

_EPS = 1e-12
# hierarchy schedule: halve the subset until it fits the coarsest budget;
# non-finest levels are cheap, so give them at least _COARSE_SWEEPS sweeps
_COARSEST = 32
_LEVEL_FACTOR = 2.0
_COARSE_SWEEPS = 40
_CONFIDENCE_POWER = 2.0


def _rotate_about(axis: np.ndarray, v: np.ndarray, angle: float) -> np.ndarray:
    # Rodrigues for unit axis and v orthogonal to axis
    return v * np.cos(angle) + np.cross(axis, v) * np.sin(angle)


def _initial_tangents(points, normals, index, rng):
    """Seeded-random tangent per point: a random angle about the normal applied
    to a base tangent derived from the nearest-neighbor direction.

    Drawing the angle (a rotation-invariant scalar) instead of projecting a
    world-space random vector keeps the initialization equivariant under rigid
    motions of the input.
    """
    n_pts = len(points)
    kk = min(2, n_pts)
    idx, _ = knn_batch(index, points, kk)
    tangents = np.empty((n_pts, 3))
    angles = rng.uniform(0.0, 2.0 * np.pi, size=n_pts)
    for i in range(n_pts):
        nn = idx[i][idx[i] != i]
        base = points[nn[0]] - points[i] if len(nn) else np.zeros(3)
        frame = enforce_frame(normals[i], base) if np.linalg.norm(base) > _EPS else enforce_frame(normals[i], np.zeros(3) + 1e-20)
        tangents[i] = _rotate_about(frame.n, frame.theta, angles[i])
    return tangents


def _project_unit(t: np.ndarray, n: np.ndarray) -> np.ndarray | None:
    """Tangent-plane projection normalized to unit length, or None if it
    degenerates. Projects twice: normalizing a near-cancelled vector amplifies
    its fp residual along the normal past frame tolerance."""
    t = t - (t @ n) * n
    nt = np.linalg.norm(t)
    if nt <= 1e-8:
        return None
    t = t / nt
    t = t - (t @ n) * n
    return t / np.linalg.norm(t)


def _sweep(thetas, rot, normals, graph):
    """One in-place pass in index order. Updated values feed later points."""
    for i in range(len(thetas)):
        nbr = graph[i]
        cand = np.concatenate([thetas[nbr], rot[nbr]])  # (2k, 3)
        dots = cand @ thetas[i]
        half = len(nbr)
        # per neighbor: theta or its quarter turn by |dot|, sign-folded
        pick_rot = np.abs(dots[half:]) > np.abs(dots[:half])
        chosen = np.where(pick_rot[:, None], cand[half:], cand[:half])
        picked = np.where(pick_rot, dots[half:], dots[:half])
        weights = np.sign(picked) * np.abs(picked) ** _CONFIDENCE_POWER
        avg = (chosen * weights[:, None]).sum(axis=0)
        t = _project_unit(avg, normals[i])
        if t is not None:  # zero-length average: keep the previous tangent
            thetas[i] = t
            rot[i] = np.cross(normals[i], thetas[i])


def _prolongate(thetas_coarse, coarse_points, coarse_normals, fine_points, fine_normals):
    """Tangents for new fine points from each one's nearest coarse point.

    One of {theta, quarter turn} always projects onto the fine tangent plane
    with length >= 1/sqrt(2), so the fallback chain cannot exhaust.
    """
    coarse_idx = SpatialIndex(coarse_points)
    ji, _ = knn_batch(coarse_idx, fine_points, 1)
    out = np.empty((len(fine_points), 3))
    for r in range(len(fine_points)):
        j = ji[r][0]
        src = thetas_coarse[j]
        t = _project_unit(src, fine_normals[r])
        if t is None:
            t = _project_unit(np.cross(coarse_normals[j], src), fine_normals[r])
        out[r] = t
    return out


def optimize_field(cloud, sweeps: int, rng_seed: int = 0, k1: int = 6):
    """Optimize a cross field over a cloud that carries normals.

    Returns (frames, energy_trace). Coarser levels are solved first; the trace
    covers the finest level (the full cloud): energy_trace[0] is the energy of
    its starting tangents and one entry follows per sweep. If the last sweep
    somehow ends above the start, the best intermediate state is restored and
    the trace truncated there, so the final entry never exceeds the first and
    the returned frames realize it.
    """
    if sweeps < 1:
        raise DataError(f"sweeps must be >= 1, got {sweeps}")
    if cloud.normals is None:
        raise DataError("optimize_field requires per-point normals")
    points = cloud.points
    normals = cloud.normals
    m = len(points)
    if m < 2:
        raise DataError("optimize_field needs at least 2 points")
    rng = np.random.default_rng(rng_seed)

    order = fps(points, m, seed_index=0)
    sizes = [m]
    while sizes[-1] > _COARSEST:
        sizes.append(max(_COARSEST, int(np.ceil(sizes[-1] / _LEVEL_FACTOR))))
    sizes = sizes[::-1]

    thetas = None
    trace = None
    for li, sz in enumerate(sizes):
        sel = order[:sz]
        p_l = points[sel]
        n_l = normals[sel]
        idx_l = SpatialIndex(p_l)
        graph_l = neighbor_graph(p_l, min(k1, sz - 1), index=idx_l)
        if thetas is None:
            thetas = _initial_tangents(p_l, n_l, idx_l, rng)
        else:
            nc = len(thetas)
            grown = np.empty((sz, 3))
            grown[:nc] = thetas
            grown[nc:] = _prolongate(thetas, p_l[:nc], n_l[:nc], p_l[nc:], n_l[nc:])
            thetas = grown
        rot = np.cross(n_l, thetas)
        finest = li == len(sizes) - 1
        if not finest:
            for _ in range(max(sweeps, _COARSE_SWEEPS)):
                _sweep(thetas, rot, n_l, graph_l)
            continue

        def level_energy():
            # the energy sum is permutation invariant, so scoring the
            # fps-ordered copy equals scoring the cloud itself
            frames = [CrossFrame(n=n_l[i], theta=thetas[i]) for i in range(sz)]
            return field_energy(p_l, frames, k1=k1, graph=graph_l).total

        trace = [level_energy()]
        best = (trace[0], thetas.copy(), 0)
        for _ in range(sweeps):
            _sweep(thetas, rot, n_l, graph_l)
            trace.append(level_energy())
            if trace[-1] < best[0]:
                best = (trace[-1], thetas.copy(), len(trace) - 1)
        if trace[-1] > trace[0]:
            thetas = best[1]
            trace = trace[: best[2] + 1]

    full = np.empty_like(thetas)
    full[order] = thetas
    frames = [CrossFrame(n=normals[i].copy(), theta=full[i].copy()) for i in range(m)]
    return frames, np.asarray(trace)
