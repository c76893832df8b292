"""Cross-field export for inspection in external viewers."""
from __future__ import annotations

import numpy as np

from ..geometry import PointCloud, bounding_box
from ..geometry.io import write_obj_segments, write_ply
from .frames import frames_to_arrays, rosy_representatives

SEGMENT_SCALE = 0.02  # segment length as a fraction of the cloud diagonal


def export_field(ply_path, cloud: PointCloud, frames, segments_path=None):
    """Write points with normal + tangent as PLY vertex properties
    (nx ny nz tx ty tz); optionally also an OBJ of 4 line segments per point
    (one per cross direction) of length 0.02 x bounding-box diagonal."""
    normals, tangents = frames_to_arrays(frames)
    out = PointCloud(points=cloud.points, normals=normals)
    write_ply(
        ply_path,
        out,
        extra={
            "tx": tangents[:, 0],
            "ty": tangents[:, 1],
            "tz": tangents[:, 2],
        },
    )
    if segments_path is not None:
        length = SEGMENT_SCALE * bounding_box(cloud).diagonal
        starts = []
        ends = []
        for p, frame in zip(cloud.points, frames):
            for rep in rosy_representatives(frame):
                starts.append(p)
                ends.append(p + length * rep)
        write_obj_segments(segments_path, np.asarray(starts), np.asarray(ends))
