"""Triangle meshes, blue-noise surface sampling, point-triangle distance."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError
from .cloud import PointCloud

# faces with area below this fraction of diag^2 are dropped by the filter pass
_DEGENERATE_AREA_FRACTION = 1e-14


@dataclass
class TriangleMesh:
    """Indexed triangle mesh.

    Construction runs a degenerate-face filter pass: faces with repeated
    vertex indices or area < 1e-14 * diag^2 are dropped, so every surviving
    face has usable area and a well-defined normal.
    """

    vertices: np.ndarray
    faces: np.ndarray
    _face_normals: np.ndarray | None = field(default=None, repr=False)
    _face_areas: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.intp)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise DataError(f"vertices must be (v, 3), got {self.vertices.shape}")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise DataError(f"faces must be (f, 3), got {self.faces.shape}")
        if not np.all(np.isfinite(self.vertices)):
            raise DataError("vertices contain non-finite values")
        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise DataError("face indices out of vertex range")
        self._filter_degenerate_faces()
        if len(self.faces) == 0:
            raise DataError("mesh has no non-degenerate faces")

    def _filter_degenerate_faces(self):
        f = self.faces
        distinct = (f[:, 0] != f[:, 1]) & (f[:, 1] != f[:, 2]) & (f[:, 0] != f[:, 2])
        f = f[distinct]
        tris = self.vertices[f]
        cross = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
        areas = 0.5 * np.linalg.norm(cross, axis=1)
        diag = float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))
        keep = areas > _DEGENERATE_AREA_FRACTION * max(diag, 1.0) ** 2
        self.faces = np.ascontiguousarray(f[keep])
        norms = cross[keep]
        self._face_areas = areas[keep]
        self._face_normals = norms / np.linalg.norm(norms, axis=1, keepdims=True)

    @property
    def face_areas(self) -> np.ndarray:
        return self._face_areas

    @property
    def face_normals(self) -> np.ndarray:
        return self._face_normals

    @property
    def total_area(self) -> float:
        return float(self._face_areas.sum())

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))


def _area_weighted_candidates(mesh: TriangleMesh, count: int, rng: np.random.Generator):
    """Uniform surface samples: area-weighted face choice + sqrt barycentric."""
    probs = mesh.face_areas / mesh.total_area
    face_idx = rng.choice(len(mesh.faces), size=count, p=probs)
    tris = mesh.vertices[mesh.faces[face_idx]]
    r1 = np.sqrt(rng.random(count))
    r2 = rng.random(count)
    w0 = 1.0 - r1
    w1 = r1 * (1.0 - r2)
    w2 = r1 * r2
    pts = w0[:, None] * tris[:, 0] + w1[:, None] * tris[:, 1] + w2[:, None] * tris[:, 2]
    return pts, mesh.face_normals[face_idx], face_idx


def _dart_throw(points: np.ndarray, radius: float, stop_at: int | None = None):
    """Greedy thinning: scan in order, accept points strictly farther than
    `radius` from every already-accepted point. Returns accepted indices in
    scan order.

    Works in chunks: a kd-tree over the accepted set prunes most candidates,
    then conflicts inside the chunk are resolved in scan order via pair lists.
    """
    from scipy.spatial import cKDTree

    n = len(points)
    limit = n if stop_at is None else min(n, stop_at)
    if radius <= 0:
        return np.arange(limit, dtype=np.intp)
    accepted: list[int] = []
    acc_pts: list[np.ndarray] = []
    chunk = 4096
    for start in range(0, n, chunk):
        block = points[start : start + chunk]
        if accepted:
            hits = cKDTree(np.asarray(acc_pts)).query_ball_point(block, r=radius)
            local = np.flatnonzero([len(h) == 0 for h in hits])
        else:
            local = np.arange(len(block))
        if not len(local):
            continue
        sub = block[local]
        pairs = cKDTree(sub).query_pairs(r=radius, output_type="ndarray")
        earlier: dict[int, list[int]] = {}
        for a, b in pairs:  # query_pairs yields a < b
            earlier.setdefault(int(b), []).append(int(a))
        taken = np.zeros(len(sub), dtype=bool)
        for j in range(len(sub)):
            if any(taken[a] for a in earlier.get(j, ())):
                continue
            taken[j] = True
            accepted.append(start + int(local[j]))
            acc_pts.append(sub[j])
            if len(accepted) >= limit:
                return np.asarray(accepted, dtype=np.intp)
    return np.asarray(accepted, dtype=np.intp)


def sample_mesh(
    mesh: TriangleMesh,
    target_count: int,
    radius="auto",
    seed: int = 0,
    pool_factor: int = 24,
) -> PointCloud:
    """Blue-noise (Poisson disk) surface samples carrying face normals.

    An area-weighted candidate pool (pool_factor x target, min 8192) is thinned
    by dart throwing. radius="auto" bisects for the largest radius that still
    yields target_count survivors from the pool; a numeric radius is used as
    given and raises DataError with the achieved count if unreachable.
    """
    if target_count < 1:
        raise DataError(f"target_count must be >= 1, got {target_count}")
    rng = np.random.default_rng(seed)
    pool = max(pool_factor * target_count, 8192)
    pts, nrm, _ = _area_weighted_candidates(mesh, pool, rng)

    if radius == "auto":
        hi = 2.0 * np.sqrt(mesh.total_area / target_count)
        lo = 0.0
        best = 0.0
        for _ in range(11):
            mid = 0.5 * (lo + hi)
            got = len(_dart_throw(pts, mid, stop_at=target_count))
            if got >= target_count:
                best = mid
                lo = mid
            else:
                hi = mid
        chosen = best
    else:
        chosen = float(radius)
        if chosen < 0:
            raise DataError(f"radius must be >= 0, got {chosen}")

    accepted = _dart_throw(pts, chosen, stop_at=target_count)
    if len(accepted) < target_count:
        raise DataError(
            f"dart throwing at radius {chosen:.6g} achieved {len(accepted)} of "
            f"{target_count} requested points"
        )
    accepted = accepted[:target_count]
    return PointCloud(points=pts[accepted], normals=nrm[accepted])


def point_triangle_distances(points: np.ndarray, mesh: TriangleMesh, chunk: int | None = None) -> np.ndarray:
    """Exact unsigned distance from each point to the nearest mesh triangle.

    Closest-point region classification (vertex / edge / face), vectorized over
    point chunks x all faces.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DataError(f"points must be (n, 3), got {pts.shape}")
    tris = mesh.vertices[mesh.faces]  # (F, 3, 3)
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    ab = b - a
    ac = c - a
    nf = len(tris)
    if chunk is None:
        chunk = max(1, 4_000_000 // max(nf, 1))
    out = np.empty(len(pts), dtype=np.float64)
    for s in range(0, len(pts), chunk):
        p = pts[s : s + chunk][:, None, :]  # (B, 1, 3)
        ap = p - a
        d1 = np.einsum("fj,bfj->bf", ab, ap)
        d2 = np.einsum("fj,bfj->bf", ac, ap)
        bp = p - b
        d3 = np.einsum("fj,bfj->bf", ab, bp)
        d4 = np.einsum("fj,bfj->bf", ac, bp)
        cp = p - c
        d5 = np.einsum("fj,bfj->bf", ab, cp)
        d6 = np.einsum("fj,bfj->bf", ac, cp)
        vc = d1 * d4 - d3 * d2
        vb = d5 * d2 - d1 * d6
        va = d3 * d6 - d5 * d4

        # barycentric face point, then overwrite by the active region
        denom = va + vb + vc
        denom = np.where(denom == 0.0, 1.0, denom)
        v = vb / denom
        w = vc / denom
        closest = a + v[..., None] * ab + w[..., None] * ac

        t_bc = (d4 - d3) / np.where((d4 - d3) + (d5 - d6) == 0.0, 1.0, (d4 - d3) + (d5 - d6))
        on_bc = b + np.clip(t_bc, 0.0, 1.0)[..., None] * (c - b)
        m_bc = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
        closest = np.where(m_bc[..., None], on_bc, closest)

        t_ac = d2 / np.where(d2 - d6 == 0.0, 1.0, d2 - d6)
        on_ac = a + np.clip(t_ac, 0.0, 1.0)[..., None] * ac
        m_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        closest = np.where(m_ac[..., None], on_ac, closest)

        t_ab = d1 / np.where(d1 - d3 == 0.0, 1.0, d1 - d3)
        on_ab = a + np.clip(t_ab, 0.0, 1.0)[..., None] * ab
        m_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        closest = np.where(m_ab[..., None], on_ab, closest)

        m_c = (d6 >= 0) & (d5 <= d6)
        closest = np.where(m_c[..., None], np.broadcast_to(c, closest.shape), closest)
        m_b = (d3 >= 0) & (d4 <= d3)
        closest = np.where(m_b[..., None], np.broadcast_to(b, closest.shape), closest)
        m_a = (d1 <= 0) & (d2 <= 0)
        closest = np.where(m_a[..., None], np.broadcast_to(a, closest.shape), closest)

        d = np.linalg.norm(pts[s : s + chunk][:, None, :] - closest, axis=2)
        out[s : s + chunk] = d.min(axis=1)
    return out
