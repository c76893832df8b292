"""Analytic triangle meshes used to fabricate desk-scale training data."""
from __future__ import annotations

import numpy as np

from ..errors import DataError
from ..geometry.mesh import TriangleMesh


def _grid_faces(nx: int, ny: int) -> np.ndarray:
    """Two triangles per quad over an (nx+1) x (ny+1) vertex lattice."""
    faces = []
    for i in range(nx):
        for j in range(ny):
            a = i * (ny + 1) + j
            b = a + 1
            c = a + (ny + 1)
            d = c + 1
            faces.append((a, c, b))
            faces.append((b, c, d))
    return np.asarray(faces, dtype=np.intp)


def cube(size: float = 1.0) -> TriangleMesh:
    h = size / 2.0
    v = np.array(
        [
            [-h, -h, -h], [h, -h, -h], [h, h, -h], [-h, h, -h],
            [-h, -h, h], [h, -h, h], [h, h, h], [-h, h, h],
        ]
    )
    f = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # bottom
            [4, 5, 6], [4, 6, 7],  # top
            [0, 1, 5], [0, 5, 4],  # front
            [2, 3, 7], [2, 7, 6],  # back
            [1, 2, 6], [1, 6, 5],  # right
            [3, 0, 4], [3, 4, 7],  # left
        ]
    )
    return TriangleMesh(vertices=v, faces=f)


def uv_sphere(radius: float = 0.55, rings: int = 14, segments: int = 20) -> TriangleMesh:
    verts = [(0.0, 0.0, radius)]
    for i in range(1, rings):
        phi = np.pi * i / rings
        z = radius * np.cos(phi)
        rho = radius * np.sin(phi)
        for j in range(segments):
            ang = 2.0 * np.pi * j / segments
            verts.append((rho * np.cos(ang), rho * np.sin(ang), z))
    verts.append((0.0, 0.0, -radius))
    top, bottom = 0, len(verts) - 1

    def ring(i, j):
        return 1 + (i - 1) * segments + (j % segments)

    faces = []
    for j in range(segments):
        faces.append((top, ring(1, j), ring(1, j + 1)))
        faces.append((bottom, ring(rings - 1, j + 1), ring(rings - 1, j)))
    for i in range(1, rings - 1):
        for j in range(segments):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            faces.append((a, c, b))
            faces.append((b, c, d))
    return TriangleMesh(vertices=np.asarray(verts), faces=np.asarray(faces, dtype=np.intp))


def ellipsoid(ax: float = 0.65, by: float = 0.45, cz: float = 0.3) -> TriangleMesh:
    base = uv_sphere(radius=1.0)
    v = base.vertices * np.array([ax, by, cz])
    return TriangleMesh(vertices=v, faces=base.faces)


def _disk_fan(center_idx: int, ring_idx: list[int], flip: bool) -> list[tuple]:
    faces = []
    n = len(ring_idx)
    for j in range(n):
        a, b = ring_idx[j], ring_idx[(j + 1) % n]
        faces.append((center_idx, b, a) if flip else (center_idx, a, b))
    return faces


def _prism(radius: float, height: float, segments: int) -> TriangleMesh:
    h = height / 2.0
    ang = 2.0 * np.pi * np.arange(segments) / segments
    ring = np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])
    verts = [(x, y, -h) for x, y in ring] + [(x, y, h) for x, y in ring]
    verts += [(0.0, 0.0, -h), (0.0, 0.0, h)]
    cb, ct = 2 * segments, 2 * segments + 1
    faces = []
    for j in range(segments):
        a, b = j, (j + 1) % segments
        c, d = segments + j, segments + (j + 1) % segments
        faces.append((a, b, d))
        faces.append((a, d, c))
    faces += _disk_fan(cb, list(range(segments)), flip=True)
    faces += _disk_fan(ct, list(range(segments, 2 * segments)), flip=False)
    return TriangleMesh(vertices=np.asarray(verts, dtype=np.float64), faces=np.asarray(faces, dtype=np.intp))


def cylinder(radius: float = 0.4, height: float = 1.0, segments: int = 28) -> TriangleMesh:
    return _prism(radius, height, segments)


def hex_prism(radius: float = 0.5, height: float = 0.9) -> TriangleMesh:
    return _prism(radius, height, 6)


def cone(radius: float = 0.5, height: float = 1.0, segments: int = 28) -> TriangleMesh:
    ang = 2.0 * np.pi * np.arange(segments) / segments
    verts = [(radius * np.cos(a), radius * np.sin(a), 0.0) for a in ang]
    apex = len(verts)
    verts.append((0.0, 0.0, height))
    base_c = len(verts)
    verts.append((0.0, 0.0, 0.0))
    faces = []
    for j in range(segments):
        a, b = j, (j + 1) % segments
        faces.append((a, b, apex))
    faces += _disk_fan(base_c, list(range(segments)), flip=True)
    return TriangleMesh(vertices=np.asarray(verts), faces=np.asarray(faces, dtype=np.intp))


def torus(major: float = 0.42, minor: float = 0.16, rings: int = 20, segments: int = 12) -> TriangleMesh:
    verts = []
    for i in range(rings):
        u = 2.0 * np.pi * i / rings
        cu, su = np.cos(u), np.sin(u)
        for j in range(segments):
            v = 2.0 * np.pi * j / segments
            rho = major + minor * np.cos(v)
            verts.append((rho * cu, rho * su, minor * np.sin(v)))

    def vid(i, j):
        return (i % rings) * segments + (j % segments)

    faces = []
    for i in range(rings):
        for j in range(segments):
            a, b = vid(i, j), vid(i, j + 1)
            c, d = vid(i + 1, j), vid(i + 1, j + 1)
            faces.append((a, c, b))
            faces.append((b, c, d))
    return TriangleMesh(vertices=np.asarray(verts), faces=np.asarray(faces, dtype=np.intp))


def _sheet(height_fn, extent: float, res: int) -> TriangleMesh:
    axis = np.linspace(-extent, extent, res + 1)
    xs, ys = np.meshgrid(axis, axis, indexing="ij")
    zs = height_fn(xs, ys)
    verts = np.column_stack([xs.ravel(), ys.ravel(), zs.ravel()])
    return TriangleMesh(vertices=verts, faces=_grid_faces(res, res))


def saddle(extent: float = 0.6, curvature: float = 0.9, res: int = 14) -> TriangleMesh:
    return _sheet(lambda x, y: curvature * (x * x - y * y), extent, res)


def wavy_sheet(extent: float = 0.6, amplitude: float = 0.12, res: int = 16) -> TriangleMesh:
    k = np.pi / extent
    return _sheet(lambda x, y: amplitude * np.sin(k * x) * np.cos(k * y), extent, res)


def pyramid(base: float = 1.0, height: float = 0.85) -> TriangleMesh:
    h = base / 2.0
    v = np.array(
        [
            [-h, -h, 0.0], [h, -h, 0.0], [h, h, 0.0], [-h, h, 0.0],
            [0.0, 0.0, height],
        ]
    )
    f = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # base
            [0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4],
        ]
    )
    return TriangleMesh(vertices=v, faces=f)


# first 8 are the desk training shapes; the last 2 stay held out for eval
SHAPE_CATALOG = {
    "cube": cube,
    "sphere": uv_sphere,
    "cylinder": cylinder,
    "cone": cone,
    "hex_prism": hex_prism,
    "saddle": saddle,
    "pyramid": pyramid,
    "wavy_sheet": wavy_sheet,
    "ellipsoid": ellipsoid,
    "torus": torus,
}
TRAIN_SHAPES = tuple(list(SHAPE_CATALOG)[:8])
HELDOUT_SHAPES = tuple(list(SHAPE_CATALOG)[8:])


def build_shape(name: str) -> TriangleMesh:
    if name not in SHAPE_CATALOG:
        raise DataError(f"unknown shape '{name}'; known: {', '.join(SHAPE_CATALOG)}")
    return SHAPE_CATALOG[name]()
