"""Patch dataset fabrication: dense base clouds, overlapped crops, GT/input pairs."""
from __future__ import annotations

import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from ..geometry import PointCloud, SpatialIndex, fps, knn
from ..geometry.io import read_xyz, write_xyz
from ..geometry.mesh import TriangleMesh, sample_mesh

DESK_BASE_POINTS = 8192
DESK_GT_POINTS = 512
DESK_INPUT_POINTS = 64


@dataclass
class PatchPair:
    """One training example: a sparse input subset of a dense GT patch."""

    input: PointCloud
    gt: PointCloud  # carries unit normals from the source faces
    shape_id: str
    patch_seed: int

    def __post_init__(self):
        if self.gt.normals is None:
            raise DataError("PatchPair gt cloud must carry normals")
        if len(self.input.points) > len(self.gt.points):
            raise DataError("input patch larger than gt patch")


def crop_size(base_points: int, gt_points: int) -> int:
    """Per-patch crop: ~5% of the base cloud, but at least 2x the GT size."""
    return max(int(math.ceil(0.05 * base_points)), 2 * gt_points)


def make_dataset(
    meshes: dict,
    patches_per_shape: int = 50,
    gt_points: int = DESK_GT_POINTS,
    input_points: int = DESK_INPUT_POINTS,
    base_points: int = DESK_BASE_POINTS,
    seed: int = 0,
    log=sys.stderr,
) -> list[PatchPair]:
    """Fabricate PatchPairs from named TriangleMeshes.

    Per shape: Poisson-disk sample a dense base cloud, FPS-seed overlapping
    kNN crops, FPS each crop down to gt_points, then take a random
    input_points subset as the sparse input (so input is a subset of gt).
    Shapes whose base cloud comes out too small are skipped with a warning.
    """
    if input_points > gt_points:
        raise DataError(f"input_points {input_points} exceeds gt_points {gt_points}")
    if patches_per_shape < 1:
        raise DataError(f"patches_per_shape must be >= 1, got {patches_per_shape}")
    pairs: list[PatchPair] = []
    need = crop_size(base_points, gt_points)
    for shape_idx, (name, mesh) in enumerate(sorted(meshes.items())):
        if not isinstance(mesh, TriangleMesh):
            raise DataError(f"meshes['{name}'] is not a TriangleMesh")
        shape_seed = seed + 7919 * shape_idx
        base = sample_mesh(mesh, base_points, seed=shape_seed)
        if len(base.points) < need:
            print(f"warning: shape '{name}' produced {len(base.points)} points, "
                  f"needs {need}; skipped", file=log)
            continue
        rng = np.random.default_rng(shape_seed + 1)
        index = SpatialIndex(base.points)
        seeds = fps(base.points, patches_per_shape, seed_index=int(rng.integers(len(base.points))))
        for p, s in enumerate(seeds):
            crop_idx, _ = knn(index, base.points[s], need)
            crop = base.subset(crop_idx)
            keep = fps(crop.points, gt_points, seed_index=0)
            gt = crop.subset(keep)
            chosen = np.sort(rng.choice(gt_points, size=input_points, replace=False))
            # input keeps its gt normals: the normal loss references them
            # across all inner iterations even as the points move
            pairs.append(
                PatchPair(
                    input=gt.subset(chosen),
                    gt=gt,
                    shape_id=name,
                    patch_seed=int(shape_seed + p),
                )
            )
    if not pairs:
        raise DataError("no shapes produced any patches")
    return pairs


def split_dataset(pairs: list, seed: int = 0, val_fraction: float = 1.0 / 11.0):
    """Deterministic shuffled split, val:train close to 1:10 by default."""
    n = len(pairs)
    if n < 2:
        raise DataError(f"need at least 2 patches to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_val = max(1, int(round(n * val_fraction)))
    if n_val >= n:
        n_val = n - 1
    val = [pairs[i] for i in order[:n_val]]
    train = [pairs[i] for i in order[n_val:]]
    return train, val


def save_dataset(pairs: list, out_dir: str):
    """Write one directory: manifest.json plus per-patch input/gt xyz files."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = []
    for i, pair in enumerate(pairs):
        in_name = f"patch_{i:05d}_input.xyz"
        gt_name = f"patch_{i:05d}_gt.xyz"
        write_xyz(os.path.join(out_dir, in_name), pair.input)
        write_xyz(os.path.join(out_dir, gt_name), pair.gt)
        manifest.append(
            {
                "input": in_name,
                "gt": gt_name,
                "shape_id": pair.shape_id,
                "patch_seed": pair.patch_seed,
            }
        )
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump({"version": 1, "patches": manifest}, fh, indent=1)


def load_dataset(in_dir: str) -> list:
    path = os.path.join(in_dir, "manifest.json")
    if not os.path.isfile(path):
        raise DataError(f"no manifest.json in {in_dir}")
    with open(path) as fh:
        manifest = json.load(fh)
    pairs = []
    for entry in manifest["patches"]:
        pairs.append(
            PatchPair(
                input=read_xyz(os.path.join(in_dir, entry["input"])),
                gt=read_xyz(os.path.join(in_dir, entry["gt"])),
                shape_id=entry["shape_id"],
                patch_seed=int(entry["patch_seed"]),
            )
        )
    if not pairs:
        raise DataError(f"manifest in {in_dir} lists no patches")
    return pairs
