"""Readers and writers: XYZ clouds, ASCII PLY clouds, OBJ meshes.

All float output uses 9 significant digits ("%.9g"). Readers raise DataError
on malformed content rather than returning partial data.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import DataError
from .cloud import PointCloud
from .mesh import TriangleMesh

FLOAT_FMT = "%.9g"


def _fmt_row(values) -> str:
    return " ".join(FLOAT_FMT % v for v in values)


def _open_read(path):
    try:
        return open(path, "r")
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from None


# ---------------------------------------------------------------- XYZ


def read_xyz(path) -> PointCloud:
    """Whitespace-separated rows: x y z or x y z nx ny nz. '#' starts a comment."""
    rows = []
    width = None
    with _open_read(path) as fh:
        for ln, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) not in (3, 6):
                raise DataError(f"{path}:{ln}: expected 3 or 6 columns, got {len(parts)}")
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise DataError(f"{path}:{ln}: inconsistent column count")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as e:
                raise DataError(f"{path}:{ln}: {e}") from None
    if not rows:
        raise DataError(f"{path}: no points")
    data = np.asarray(rows, dtype=np.float64)
    if width == 6:
        return PointCloud(points=data[:, :3], normals=data[:, 3:])
    return PointCloud(points=data)


def write_xyz(path, cloud: PointCloud):
    with open(path, "w") as fh:
        if cloud.normals is not None:
            for p, n in zip(cloud.points, cloud.normals):
                fh.write(_fmt_row([*p, *n]) + "\n")
        else:
            for p in cloud.points:
                fh.write(_fmt_row(p) + "\n")


# ---------------------------------------------------------------- PLY (ASCII)


def write_ply(path, cloud: PointCloud, extra: dict | None = None):
    """ASCII PLY with x y z, optional nx ny nz, and optional extra float props.

    extra maps property name -> (n,) array, written after the normals.
    """
    extra = extra or {}
    for name, col in extra.items():
        if len(col) != len(cloud):
            raise DataError(f"extra property '{name}' has wrong length")
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(cloud)}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        if cloud.normals is not None:
            fh.write("property float nx\nproperty float ny\nproperty float nz\n")
        for name in extra:
            fh.write(f"property float {name}\n")
        fh.write("end_header\n")
        cols = [cloud.points]
        if cloud.normals is not None:
            cols.append(cloud.normals)
        if extra:
            cols.append(np.column_stack([np.asarray(extra[k], dtype=np.float64) for k in extra]))
        table = np.column_stack(cols)
        for row in table:
            fh.write(_fmt_row(row) + "\n")


def read_ply(path) -> PointCloud:
    """Minimal ASCII PLY reader: consumes vertex x/y/z (+ nx/ny/nz when present).

    Other elements and properties are skipped. Binary PLY raises DataError.
    """
    with _open_read(path) as fh:
        line = fh.readline().strip()
        if line != "ply":
            raise DataError(f"{path}: not a PLY file")
        elements = []  # (name, count, [prop names])
        fmt = None
        while True:
            line = fh.readline()
            if not line:
                raise DataError(f"{path}: unexpected end of header")
            tok = line.strip().split()
            if not tok:
                continue
            if tok[0] == "format":
                fmt = tok[1]
            elif tok[0] == "element":
                elements.append((tok[1], int(tok[2]), []))
            elif tok[0] == "property":
                if not elements:
                    raise DataError(f"{path}: property before element")
                if tok[1] == "list":
                    elements[-1][2].append(("list", tok[-1]))
                else:
                    elements[-1][2].append((tok[1], tok[2]))
            elif tok[0] == "end_header":
                break
        if fmt != "ascii":
            raise DataError(f"{path}: only ascii PLY is supported, got format '{fmt}'")
        cloud = None
        for name, count, props in elements:
            if name != "vertex":
                for _ in range(count):
                    fh.readline()
                continue
            prop_names = [p[1] for p in props]
            if any(p[0] == "list" for p in props):
                raise DataError(f"{path}: list properties on vertex element are unsupported")
            for axis in ("x", "y", "z"):
                if axis not in prop_names:
                    raise DataError(f"{path}: vertex element missing '{axis}'")
            data = np.empty((count, len(prop_names)), dtype=np.float64)
            for i in range(count):
                parts = fh.readline().split()
                if len(parts) != len(prop_names):
                    raise DataError(f"{path}: vertex row {i} has {len(parts)} fields, expected {len(prop_names)}")
                data[i] = [float(v) for v in parts]
            cols = {nm: data[:, j] for j, nm in enumerate(prop_names)}
            points = np.column_stack([cols["x"], cols["y"], cols["z"]])
            normals = None
            if all(k in cols for k in ("nx", "ny", "nz")):
                normals = np.column_stack([cols["nx"], cols["ny"], cols["nz"]])
            cloud = PointCloud(points=points, normals=normals)
        if cloud is None:
            raise DataError(f"{path}: no vertex element")
        return cloud


# ---------------------------------------------------------------- OBJ


def read_obj(path) -> TriangleMesh:
    """OBJ mesh reader: v and f records, polygons fan-triangulated."""
    vertices = []
    faces = []
    with _open_read(path) as fh:
        for ln, line in enumerate(fh, 1):
            tok = line.split("#", 1)[0].split()
            if not tok:
                continue
            if tok[0] == "v":
                if len(tok) < 4:
                    raise DataError(f"{path}:{ln}: short vertex record")
                vertices.append([float(tok[1]), float(tok[2]), float(tok[3])])
            elif tok[0] == "f":
                if len(tok) < 4:
                    raise DataError(f"{path}:{ln}: face with fewer than 3 vertices")
                idx = []
                for ref in tok[1:]:
                    base = ref.split("/")[0]
                    try:
                        i = int(base)
                    except ValueError:
                        raise DataError(f"{path}:{ln}: bad face index '{ref}'") from None
                    if i > 0:
                        idx.append(i - 1)
                    elif i < 0:
                        idx.append(len(vertices) + i)
                    else:
                        raise DataError(f"{path}:{ln}: zero face index")
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not vertices or not faces:
        raise DataError(f"{path}: OBJ has no usable geometry")
    return TriangleMesh(vertices=np.asarray(vertices), faces=np.asarray(faces))


def write_obj(path, mesh: TriangleMesh):
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write("v " + _fmt_row(v) + "\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def write_obj_segments(path, starts: np.ndarray, ends: np.ndarray):
    """OBJ made of line segments (v records + l records), for visualization."""
    starts = np.asarray(starts, dtype=np.float64)
    ends = np.asarray(ends, dtype=np.float64)
    if starts.shape != ends.shape or starts.ndim != 2 or starts.shape[1] != 3:
        raise DataError("segment endpoints must be matching (n, 3) arrays")
    with open(path, "w") as fh:
        for s, e in zip(starts, ends):
            fh.write("v " + _fmt_row(s) + "\n")
            fh.write("v " + _fmt_row(e) + "\n")
        for i in range(len(starts)):
            fh.write(f"l {2 * i + 1} {2 * i + 2}\n")


def read_cloud(path) -> PointCloud:
    """Dispatch on extension: .xyz or .ply."""
    suffix = Path(path).suffix.lower()
    if suffix == ".xyz":
        return read_xyz(path)
    if suffix == ".ply":
        return read_ply(path)
    raise DataError(f"unsupported cloud format '{suffix}' (use .xyz or .ply)")


def write_cloud(path, cloud: PointCloud):
    suffix = Path(path).suffix.lower()
    if suffix == ".xyz":
        write_xyz(path, cloud)
    elif suffix == ".ply":
        write_ply(path, cloud)
    else:
        raise DataError(f"unsupported cloud format '{suffix}' (use .xyz or .ply)")
