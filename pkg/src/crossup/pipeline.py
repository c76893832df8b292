"""Arbitrary-ratio upsampling: frame fields, chart mapping, iterative refinement.

The per-pass flow: estimate a frame per input point, gather its radius
neighborhood, express it in the frame's chart, scatter learned point features
into a voxel grid, run the chart network, sample tangent positions, and map
each sample to a 3D offset. The union of mapped samples is the dense candidate
cloud; each point's own center sample becomes its refined position for the
next pass.
"""
from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .chart import (
    LocalFrameMatrix,
    TangentGrid,
    bilinear_features,
    from_chart,
    scatter_to_voxels,
    tangent_grid_points,
    to_chart,
)
from .config import UpsampleConfig
from .errors import DataError, DegenerateNeighborhoodError, NumericError
from .field.energy import neighbor_graph
from .field.frames import enforce_frame, frames_to_arrays
from .field.solver import optimize_field
from .geometry import PointCloud, SpatialIndex, fps, knn_batch, radius_neighbors
from .geometry.normals import estimate_normals, orient_away_from_centroid
from .nn import tensor as T
from .nn.layers import NetworkWeights, forward_chart, forward_extractor, forward_mapper

_CONV_CHUNK = 128
_DEDUP_TOL = 1e-12


def cloud_scale(points: np.ndarray) -> float:
    """Largest pairwise distance (the cloud's diameter).

    Used as the pipeline's size reference instead of the axis-aligned box
    diagonal: the diameter is exactly rotation invariant, which the box
    diagonal is not, and the chart radius must not change when the cloud is
    rigidly moved.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DataError(f"points must be (m, 3), got {pts.shape}")
    best = 0.0
    for start in range(0, len(pts), 2048):
        block = pts[start : start + 2048]
        d2 = np.sum((block[:, None, :] - pts[None, :, :]) ** 2, axis=2)
        best = max(best, float(d2.max()))
    return math.sqrt(best)


@dataclass
class FrameField:
    """Per-point frames plus the learned features scattered into charts."""

    frames: list
    normals: np.ndarray  # (m, 3) the normals the frames were built on
    extractor: object  # ExtractorOutput; tensors stay live for training

    @property
    def features(self) -> np.ndarray:
        return np.asarray(self.extractor.features.data, dtype=np.float64)


def estimate_frame_field(
    points: np.ndarray,
    weights: NetworkWeights,
    cfg: UpsampleConfig,
    index: SpatialIndex | None = None,
) -> FrameField:
    """Frames via the configured backends plus extractor features.

    Geometric backends (pca + solver) produce rigidly equivariant frames; the
    extractor then sees each point's neighborhood in its own frame, which
    makes the features motion invariant. Learned backends run the extractor
    on centroid-centered coordinates first and read frames off its heads.
    """
    pts = np.asarray(points, dtype=np.float64)
    m = len(pts)
    if m < 2:
        raise DataError(f"frame field needs at least 2 points, got {m}")
    if index is None:
        index = SpatialIndex(pts)
    k_graph = min(weights.arch.graph_k, m - 1)
    graph = neighbor_graph(pts, k_graph, index=index)
    geometric = cfg.normal_backend == "pca" and cfg.field_backend == "solver"
    centered = pts - pts.mean(axis=0)

    ext = None
    if not geometric:
        ext = forward_extractor(centered, graph, weights)

    if cfg.normal_backend == "pca":
        k_pca = min(cfg.pca_k, m)
        normals, _conf = estimate_normals(pts, index, k=k_pca)
        normals = orient_away_from_centroid(pts, normals, index, k=k_pca)
    else:
        normals = np.array(ext.normals.data, dtype=np.float64)
        norms = np.linalg.norm(normals, axis=1)
        weak = norms <= 1e-12
        normals[weak] = (0.0, 0.0, 1.0)
        normals[~weak] /= norms[~weak][:, None]

    if cfg.field_backend == "solver":
        frames, _ = optimize_field(
            PointCloud(points=pts, normals=normals),
            sweeps=cfg.field_sweeps,
            rng_seed=cfg.seed,
            k1=cfg.k1,
        )
    else:
        frames = [enforce_frame(normals[i], ext.thetas.data[i]) for i in range(m)]

    if geometric:
        fr_n, fr_t = frames_to_arrays(frames)
        rot = np.stack([fr_t, np.cross(fr_n, fr_t), fr_n], axis=2)
        ext = forward_extractor(centered, graph, weights, frame_rotations=rot)

    return FrameField(frames=frames, normals=normals, extractor=ext)


def sample_tangent_positions(d: int, spacing: float, count: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Tangent (x, y) sample positions for one chart; row 0 is always the
    grid center.

    Returns (positions (count, 2), cells (count,)) where cells holds the flat
    grid index of exact grid samples and -1 for free positions. Up to d*d
    samples these are a seeded grid subset; beyond that, all grid points plus
    uniform positions strictly inside the grid hull.
    """
    if count < 1:
        raise DataError(f"sample count must be >= 1, got {count}")
    cells = tangent_grid_points(d, spacing)[:, :2]
    n_cells = d * d
    center = (n_cells - 1) // 2
    if count <= n_cells:
        others = np.delete(np.arange(n_cells), center)
        if count > 1:
            chosen = np.sort(rng.choice(others, size=count - 1, replace=False))
        else:
            chosen = np.empty(0, dtype=np.int64)
        flat = np.concatenate([[center], chosen]).astype(np.intp)
        return cells[flat].copy(), flat
    extra = count - n_cells
    half_extent = spacing * (d - 1) / 2.0
    free = rng.uniform(-1.0, 1.0, size=(extra, 2)) * (1.0 - 1e-12) * half_extent
    order = np.concatenate([[center], np.delete(np.arange(n_cells), center)]).astype(np.intp)
    positions = np.vstack([cells[order], free])
    flags = np.concatenate([order, np.full(extra, -1, dtype=np.intp)])
    return positions, flags


@dataclass
class PatchPass:
    """Result of one refinement pass over a patch."""

    candidates: PointCloud  # union of all mapped tangent samples
    refined: PointCloud  # per-point center-sample images (next input)
    skipped: int  # charts that failed and passed through unchanged


def upsample_patch_once(
    cloud,
    weights: NetworkWeights,
    cfg: UpsampleConfig,
    rng=None,
    samples_per_chart: int | None = None,
) -> PatchPass:
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    m = len(pts)
    if m < cfg.k1 + 1:
        raise DataError(f"patch needs at least k1+1 = {cfg.k1 + 1} points, got {m}")
    diameter = cloud_scale(pts)
    if diameter <= 0:
        raise DataError("patch is degenerate: all points coincide")
    r_n = cfg.beta * diameter
    spacing = 2.0 * r_n / cfg.d
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    count = samples_per_chart if samples_per_chart is not None else int(math.ceil(cfg.ratio)) + cfg.oversample
    if count < 1:
        raise DataError(f"samples per chart must be >= 1, got {count}")

    index = SpatialIndex(pts)
    field = estimate_frame_field(pts, weights, cfg, index=index)
    arch = weights.arch
    d = cfg.d

    mats: list[LocalFrameMatrix | None] = []
    vox = np.zeros((m, arch.c_f, d, d, d))
    skipped = np.zeros(m, dtype=bool)
    for i in range(m):
        try:
            nbr, _ = radius_neighbors(index, pts[i], r_n, cap=cfg.k2)
            mat = LocalFrameMatrix.from_frame(field.frames[i], pts[i])
            coords = to_chart(pts[nbr], mat)
            grid = scatter_to_voxels(coords, field.features[nbr], d, spacing)
            vox[i] = np.moveaxis(grid.features, 3, 0)
            mats.append(mat)
        except (DataError, DegenerateNeighborhoodError):
            skipped[i] = True
            mats.append(None)

    cell_feats = np.empty((m, d, d, arch.cell_width))
    for start in range(0, m, _CONV_CHUNK):
        out = forward_chart(T.constant(vox[start : start + _CONV_CHUNK]), weights)
        cell_feats[start : start + _CONV_CHUNK] = out.data

    all_pos: list[np.ndarray] = []
    all_feat: list[np.ndarray] = []
    chart_rows: list[tuple[int, int]] = []  # (chart index, first row)
    row = 0
    for i in range(m):
        if skipped[i]:
            continue
        pos, flags = sample_tangent_positions(d, spacing, count, rng)
        feats = np.empty((count, arch.cell_width))
        on_grid = flags >= 0
        flat_cells = cell_feats[i].reshape(d * d, arch.cell_width)
        if on_grid.any():
            feats[on_grid] = flat_cells[flags[on_grid]]
        if (~on_grid).any():
            grid = TangentGrid(d=d, spacing=spacing, features=cell_feats[i])
            feats[~on_grid] = bilinear_features(grid, pos[~on_grid])
        all_pos.append(pos)
        all_feat.append(feats)
        chart_rows.append((i, row))
        row += count

    refined = pts.copy()
    blocks: list[np.ndarray] = [None] * m  # type: ignore[list-item]
    if chart_rows:
        pos_all = np.vstack(all_pos)
        offsets = np.array(forward_mapper(pos_all, np.vstack(all_feat), weights).data)
        if not np.all(np.isfinite(offsets)):
            raise NumericError("mapper produced non-finite offsets")
        limit = cfg.offset_clamp * r_n
        norms = np.linalg.norm(offsets, axis=1)
        over = norms > limit
        if over.any():
            offsets[over] *= (limit / norms[over])[:, None]
        moved = np.concatenate([pos_all, np.zeros((len(pos_all), 1))], axis=1) + offsets
        for i, first in chart_rows:
            world = from_chart(moved[first : first + count], mats[i])
            blocks[i] = world
            refined[i] = world[0]  # row 0 is the center sample
    for i in range(m):
        if blocks[i] is None:
            blocks[i] = pts[i : i + 1]
    candidates = np.vstack(blocks)
    if not (np.all(np.isfinite(candidates)) and np.all(np.isfinite(refined))):
        raise NumericError("refinement produced non-finite points")
    return PatchPass(
        candidates=PointCloud(points=candidates),
        refined=PointCloud(points=refined),
        skipped=int(skipped.sum()),
    )


@dataclass
class IterationSnapshot:
    """Per-pass record kept by upsample_iterative."""

    iteration: int
    input_points: np.ndarray
    candidates: np.ndarray
    skipped: int
    mean_shift: float  # mean |refined - input| this pass


def upsample_iterative(cloud, weights: NetworkWeights, cfg: UpsampleConfig):
    """Run cfg.iterations refinement passes and FPS the last candidate cloud
    down to exactly floor(ratio * m) points.

    Returns (PointCloud, list[IterationSnapshot]).
    """
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    m = len(pts)
    target = int(math.floor(cfg.ratio * m))
    if target < 1:
        raise DataError(f"target size floor(ratio*m) = {target} must be >= 1")
    rng = np.random.default_rng(cfg.seed)
    x = np.array(pts, dtype=np.float64)
    trace: list[IterationSnapshot] = []
    for it in range(cfg.iterations):
        step = upsample_patch_once(PointCloud(points=x), weights, cfg, rng=rng)
        nxt = step.refined.points
        trace.append(
            IterationSnapshot(
                iteration=it,
                input_points=x,
                candidates=step.candidates.points,
                skipped=step.skipped,
                mean_shift=float(np.mean(np.linalg.norm(nxt - x, axis=1))),
            )
        )
        x = nxt
    cand = trace[-1].candidates
    if len(cand) < target:
        raise DataError(f"only {len(cand)} candidates for target {target}; too many skipped charts")
    seed_index = int(rng.integers(len(cand)))
    keep = fps(cand, target, seed_index=seed_index)
    return PointCloud(points=cand[keep]), trace


def dedup_points(points: np.ndarray, tol: float = _DEDUP_TOL) -> np.ndarray:
    """Drop near-coincident points (keeps the lower index of each pair)."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 2:
        return pts.copy()
    pairs = cKDTree(pts).query_pairs(r=tol, output_type="ndarray")
    drop = np.zeros(len(pts), dtype=bool)
    if len(pairs):
        drop[pairs.max(axis=1)] = True
    return pts[~drop]


def upsample_full_shape(
    cloud,
    weights: NetworkWeights,
    cfg: UpsampleConfig,
    patch_size: int = 256,
    seed_count: int | None = None,
) -> PointCloud:
    """Upsample a whole shape: FPS seeds, per-seed kNN patches, per-patch
    normalize/upsample/denormalize, merge, dedup, FPS to floor(ratio * n).
    """
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    n = len(pts)
    if n < cfg.k1 + 1:
        raise DataError(f"full shape needs at least k1+1 = {cfg.k1 + 1} points, got {n}")
    target = int(math.floor(cfg.ratio * n))
    ps = min(patch_size, n)
    if seed_count is None:
        seed_count = max(1, int(math.ceil(2.0 * n / ps)))
    seed_count = min(seed_count, n)
    rng = np.random.default_rng(cfg.seed)
    index = SpatialIndex(pts)
    seeds = fps(pts, seed_count, seed_index=int(rng.integers(n)))
    patch_idx, _ = knn_batch(index, pts[seeds], ps)

    def run_patch(j: int) -> np.ndarray:
        # ascending order: patch composition independent of distance ranking,
        # and a patch covering the whole cloud keeps the input order
        patch = pts[np.sort(patch_idx[j])]
        centroid = patch.mean(axis=0)
        scale = cloud_scale(patch)
        if scale <= 0:
            return patch
        local = (patch - centroid) / scale
        pcfg = dataclasses.replace(cfg, seed=cfg.seed + j)
        up, _ = upsample_iterative(PointCloud(points=local), weights, pcfg)
        return up.points * scale + centroid

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            blocks = list(pool.map(run_patch, range(len(seeds))))
    else:
        blocks = [run_patch(j) for j in range(len(seeds))]
    merged = dedup_points(np.vstack(blocks))
    if len(merged) < target:
        raise DataError(f"merged cloud has {len(merged)} points, below target {target}")
    keep = fps(merged, target, seed_index=int(rng.integers(len(merged))))
    return PointCloud(points=merged[keep])
