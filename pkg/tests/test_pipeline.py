"""End-to-end upsampling pipeline: charts, sampling, iteration, full shapes."""
import math

import numpy as np
import pytest
from scipy.spatial.distance import pdist

from conftest import random_cloud, random_rotation

from crossup.config import UpsampleConfig
from crossup.errors import DataError
from crossup.field.frames import frames_to_arrays
from crossup.geometry import PointCloud, bounding_box
from crossup.nn.layers import NetArchitecture, NetworkWeights
from crossup.pipeline import (
    cloud_scale,
    dedup_points,
    estimate_frame_field,
    sample_tangent_positions,
    upsample_full_shape,
    upsample_iterative,
    upsample_patch_once,
)

ARCH = NetArchitecture(d=3, c=2, c_f=2, edge_hidden=4, trunk_hidden=4, mapper_hidden=5, graph_k=3)


def tiny_cfg(**overrides) -> UpsampleConfig:
    base = dict(
        ratio=2.0, iterations=2, k1=3, k2=8, d=3, c=2, c_f=2,
        pca_k=4, field_sweeps=3, seed=0, oversample=2,
    )
    base.update(overrides)
    return UpsampleConfig(**base)


def patch_cloud(n=24, seed=0):
    """Wavy sheet: well-conditioned normals, non-flat."""
    rng = np.random.default_rng(seed)
    xy = rng.uniform(-1, 1, (n, 2))
    z = 0.2 * np.sin(2.0 * xy[:, 0]) * np.cos(1.5 * xy[:, 1])
    return np.column_stack([xy, z])


class TestCloudScale:
    def test_matches_brute_diameter(self):
        rng = np.random.default_rng(0)
        for trial in range(10):
            pts = rng.uniform(-3, 3, (int(rng.integers(2, 300)), 3))
            assert abs(cloud_scale(pts) - pdist(pts).max()) < 1e-12

    def test_chunked_path(self):
        rng = np.random.default_rng(1)
        pts = rng.uniform(-1, 1, (2100, 3))
        assert abs(cloud_scale(pts) - pdist(pts).max()) < 1e-12

    def test_rotation_invariant(self):
        pts = random_cloud(100, seed=2)
        rot = random_rotation(3)
        assert abs(cloud_scale(pts) - cloud_scale(pts @ rot.T)) < 1e-9

    def test_two_points(self):
        pts = np.array([[0.0, 0, 0], [3.0, 4, 0]])
        assert cloud_scale(pts) == 5.0

    def test_bad_shape(self):
        with pytest.raises(DataError):
            cloud_scale(np.zeros((4, 2)))


class TestSampleTangentPositions:
    def test_single_sample_is_center(self):
        rng = np.random.default_rng(0)
        pos, flags = sample_tangent_positions(3, 0.5, 1, rng)
        assert pos.shape == (1, 2) and np.array_equal(pos[0], [0.0, 0.0])
        assert flags.tolist() == [4]  # flat index of the 3x3 center

    def test_full_grid(self):
        rng = np.random.default_rng(1)
        d, s = 3, 0.5
        pos, flags = sample_tangent_positions(d, s, d * d, rng)
        assert len(pos) == 9
        assert np.array_equal(pos[0], [0.0, 0.0])
        assert sorted(flags.tolist()) == list(range(9))
        # all positions are exact grid nodes
        got = {tuple(p) for p in pos}
        want = {(s * (i - 1), s * (j - 1)) for i in range(3) for j in range(3)}
        assert got == want

    def test_partial_grid_subset(self):
        rng = np.random.default_rng(2)
        pos, flags = sample_tangent_positions(3, 0.5, 4, rng)
        assert flags[0] == 4 and len(set(flags.tolist())) == 4
        assert np.all(flags >= 0)

    def test_oversized_count_adds_free_points_inside_hull(self):
        rng = np.random.default_rng(3)
        d, s, count = 3, 0.5, 14
        pos, flags = sample_tangent_positions(d, s, count, rng)
        assert len(pos) == count
        assert np.sum(flags >= 0) == d * d and np.sum(flags == -1) == count - d * d
        half = s * (d - 1) / 2
        free = pos[flags == -1]
        assert np.all(np.abs(free) < half)

    def test_seeded_determinism(self):
        a, _ = sample_tangent_positions(5, 0.3, 12, np.random.default_rng(7))
        b, _ = sample_tangent_positions(5, 0.3, 12, np.random.default_rng(7))
        assert np.array_equal(a, b)

    def test_count_below_one_rejected(self):
        with pytest.raises(DataError, match="count"):
            sample_tangent_positions(3, 0.5, 0, np.random.default_rng(0))


class TestEstimateFrameField:
    def test_geometric_frames_use_pca_normals(self):
        from crossup.geometry import SpatialIndex
        from crossup.geometry.normals import estimate_normals, orient_away_from_centroid

        pts = patch_cloud(30, seed=4)
        w = NetworkWeights.initialize(ARCH, seed=0)
        cfg = tiny_cfg()
        field = estimate_frame_field(pts, w, cfg)
        index = SpatialIndex(pts)
        normals, _ = estimate_normals(pts, index, k=cfg.pca_k)
        normals = orient_away_from_centroid(pts, normals, index, k=cfg.pca_k)
        assert np.allclose(field.normals, normals)
        fr_n, _ = frames_to_arrays(field.frames)
        assert np.allclose(fr_n, normals)

    def test_features_shape_and_finite(self):
        pts = patch_cloud(20, seed=5)
        w = NetworkWeights.initialize(ARCH, seed=1)
        field = estimate_frame_field(pts, w, tiny_cfg())
        assert field.features.shape == (20, ARCH.c_f)
        assert np.all(np.isfinite(field.features))

    def test_learned_backends_read_heads(self):
        pts = patch_cloud(20, seed=6)
        w = NetworkWeights.initialize(ARCH, seed=2)
        cfg = tiny_cfg(normal_backend="learned", field_backend="learned")
        field = estimate_frame_field(pts, w, cfg)
        assert np.allclose(np.linalg.norm(field.normals, axis=1), 1.0)
        fr_n, fr_t = frames_to_arrays(field.frames)
        # frames stay orthonormal even off learned raw heads
        assert np.abs((fr_n * fr_t).sum(axis=1)).max() < 1e-9

    def test_too_few_points(self):
        w = NetworkWeights.zeros(ARCH)
        with pytest.raises(DataError, match="at least 2"):
            estimate_frame_field(np.zeros((1, 3)), w, tiny_cfg())


class TestUpsamplePatchOnce:
    def test_zero_weights_fixed_point(self):
        pts = patch_cloud(24, seed=7)
        w = NetworkWeights.zeros(ARCH)
        cfg = tiny_cfg()
        out = upsample_patch_once(pts, w, cfg)
        # zero offsets: the center sample maps back to the chart origin
        assert np.array_equal(out.refined.points, pts)
        assert out.skipped == 0

    def test_zero_weights_candidates_lie_in_tangent_planes(self):
        pts = patch_cloud(24, seed=7)
        w = NetworkWeights.zeros(ARCH)
        cfg = tiny_cfg()
        count = int(math.ceil(cfg.ratio)) + cfg.oversample
        out = upsample_patch_once(pts, w, cfg)
        field = estimate_frame_field(pts, w, cfg)
        fr_n, _ = frames_to_arrays(field.frames)
        cand = out.candidates.points
        assert len(cand) == len(pts) * count
        for i in range(len(pts)):
            block = cand[i * count : (i + 1) * count]
            heights = (block - pts[i]) @ fr_n[i]
            assert np.abs(heights).max() < 1e-9

    def test_candidate_count_formula(self):
        pts = patch_cloud(20, seed=8)
        w = NetworkWeights.initialize(ARCH, seed=3)
        cfg = tiny_cfg(ratio=2.5, oversample=1)
        out = upsample_patch_once(pts, w, cfg)
        assert len(out.candidates.points) == 20 * (math.ceil(2.5) + 1)

    def test_samples_per_chart_override(self):
        pts = patch_cloud(16, seed=9)
        w = NetworkWeights.zeros(ARCH)
        out = upsample_patch_once(pts, w, tiny_cfg(), samples_per_chart=5)
        assert len(out.candidates.points) == 16 * 5

    def test_deterministic(self):
        pts = patch_cloud(20, seed=10)
        w = NetworkWeights.initialize(ARCH, seed=4)
        a = upsample_patch_once(pts, w, tiny_cfg())
        b = upsample_patch_once(pts, w, tiny_cfg())
        assert np.array_equal(a.candidates.points, b.candidates.points)
        assert np.array_equal(a.refined.points, b.refined.points)

    def test_too_small_patch(self):
        w = NetworkWeights.zeros(ARCH)
        with pytest.raises(DataError, match="k1"):
            upsample_patch_once(np.zeros((3, 3)), w, tiny_cfg())

    def test_coincident_points_rejected(self):
        w = NetworkWeights.zeros(ARCH)
        pts = np.tile([1.0, 2.0, 3.0], (10, 1))
        with pytest.raises(DataError, match="degenerate"):
            upsample_patch_once(pts, w, tiny_cfg())

    def test_rigid_equivariance(self):
        """PCA normals + solver field: every stage is frame relative, so the
        upsampled output of a rigidly moved patch is the moved output."""
        from conftest import random_rigid

        pts = patch_cloud(24, seed=22)
        w = NetworkWeights.initialize(ARCH, seed=13)
        cfg = tiny_cfg()
        base = upsample_patch_once(pts, w, cfg)
        rot, trans = random_rigid(23)
        moved = upsample_patch_once(pts @ rot.T + trans, w, cfg)
        assert np.abs(moved.candidates.points
                      - (base.candidates.points @ rot.T + trans)).max() < 1e-6
        assert np.abs(moved.refined.points
                      - (base.refined.points @ rot.T + trans)).max() < 1e-6

    def test_offsets_bounded_by_clamp(self):
        # huge random weights cannot push candidates past the clamp radius
        pts = patch_cloud(20, seed=11)
        w = NetworkWeights.initialize(ARCH, seed=5)
        for t in w.params.values():
            t.data = t.data * 50.0
        cfg = tiny_cfg(offset_clamp=1.5)
        out = upsample_patch_once(pts, w, cfg)
        r_n = cfg.beta * cloud_scale(pts)
        half = (cfg.d - 1) / cfg.d * r_n  # grid half extent
        limit = np.sqrt(2) * half + cfg.offset_clamp * r_n
        count = int(math.ceil(cfg.ratio)) + cfg.oversample
        cand = out.candidates.points
        for i in range(len(pts)):
            block = cand[i * count : (i + 1) * count]
            assert np.linalg.norm(block - pts[i], axis=1).max() <= limit + 1e-9


class TestUpsampleIterative:
    def test_output_size_is_floor_ratio_m(self):
        pts = patch_cloud(16, seed=12)
        w = NetworkWeights.zeros(ARCH)
        for ratio, m_expected in ((1.5, 24), (2.0, 32), (3.3, 52)):
            cfg = tiny_cfg(ratio=ratio, iterations=1)
            up, trace = upsample_iterative(pts, w, cfg)
            assert len(up.points) == m_expected == int(math.floor(ratio * 16))

    def test_trace_structure(self):
        pts = patch_cloud(16, seed=13)
        w = NetworkWeights.initialize(ARCH, seed=6)
        cfg = tiny_cfg(iterations=3)
        up, trace = upsample_iterative(pts, w, cfg)
        assert [s.iteration for s in trace] == [0, 1, 2]
        assert np.array_equal(trace[0].input_points, pts)
        for s in trace:
            assert s.mean_shift >= 0.0
        # each pass feeds the next: refined positions become inputs
        assert not np.array_equal(trace[1].input_points, trace[0].input_points)

    def test_single_iteration_uses_one_pass(self):
        pts = patch_cloud(16, seed=14)
        w = NetworkWeights.initialize(ARCH, seed=7)
        cfg = tiny_cfg(iterations=1)
        up, trace = upsample_iterative(pts, w, cfg)
        assert len(trace) == 1
        # selected points are a subset of that pass's candidates
        cand = {tuple(p) for p in trace[0].candidates}
        assert all(tuple(p) in cand for p in up.points)

    def test_deterministic(self):
        pts = patch_cloud(16, seed=15)
        w = NetworkWeights.initialize(ARCH, seed=8)
        a, _ = upsample_iterative(pts, w, tiny_cfg())
        b, _ = upsample_iterative(pts, w, tiny_cfg())
        assert np.array_equal(a.points, b.points)

    def test_zero_weight_iteration_is_stationary(self):
        pts = patch_cloud(16, seed=16)
        w = NetworkWeights.zeros(ARCH)
        _, trace = upsample_iterative(pts, w, tiny_cfg(iterations=3))
        for s in trace:
            assert s.mean_shift == 0.0
            assert np.array_equal(s.input_points, pts)

    def test_target_below_one_rejected(self):
        # ratio just above 1 on a tiny patch still >= 1, so shrink via floor:
        # ratio * m < 1 cannot happen with ratio > 1, so check the error path
        # through a direct config: ratio must be > 1 per config validation
        with pytest.raises(DataError, match="ratio"):
            tiny_cfg(ratio=0.25)


class TestDedup:
    def test_removes_duplicates_keeps_lower_index(self):
        pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 0, 0], [2.0, 0, 0]])
        out = dedup_points(pts)
        assert np.array_equal(out, [[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]])

    def test_tolerance(self):
        pts = np.array([[0.0, 0, 0], [5e-4, 0, 0]])
        assert len(dedup_points(pts)) == 2
        assert len(dedup_points(pts, tol=1e-3)) == 1

    def test_small_inputs(self):
        assert len(dedup_points(np.zeros((0, 3)))) == 0
        one = dedup_points(np.array([[1.0, 2, 3]]))
        assert np.array_equal(one, [[1.0, 2, 3]])


class TestUpsampleFullShape:
    def test_output_size(self):
        pts = patch_cloud(60, seed=17)
        w = NetworkWeights.initialize(ARCH, seed=9)
        cfg = tiny_cfg(ratio=2.0, iterations=1)
        up = upsample_full_shape(pts, w, cfg, patch_size=24)
        assert len(up.points) == 120

    def test_deterministic(self):
        pts = patch_cloud(50, seed=18)
        w = NetworkWeights.initialize(ARCH, seed=10)
        cfg = tiny_cfg(iterations=1)
        a = upsample_full_shape(pts, w, cfg, patch_size=20)
        b = upsample_full_shape(pts, w, cfg, patch_size=20)
        assert np.array_equal(a.points, b.points)

    def test_threads_match_serial(self):
        pts = patch_cloud(50, seed=19)
        w = NetworkWeights.initialize(ARCH, seed=11)
        serial = upsample_full_shape(pts, w, tiny_cfg(iterations=1, threads=1), patch_size=20)
        threaded = upsample_full_shape(pts, w, tiny_cfg(iterations=1, threads=4), patch_size=20)
        assert np.array_equal(serial.points, threaded.points)

    def test_candidates_stay_near_input(self):
        pts = patch_cloud(60, seed=20)
        w = NetworkWeights.initialize(ARCH, seed=12)
        cfg = tiny_cfg(ratio=2.0, iterations=2)
        up = upsample_full_shape(pts, w, cfg, patch_size=24)
        # every output lies within the input bounding box dilated by the chart
        # reach: sqrt(2) half-extents plus the offset clamp, per patch radius
        box = bounding_box(PointCloud(pts))
        reach = (np.sqrt(2) + cfg.offset_clamp) * cfg.beta * cloud_scale(pts)
        lo = box.lo - reach
        hi = box.hi + reach
        assert np.all(up.points >= lo - 1e-9) and np.all(up.points <= hi + 1e-9)

    def test_merged_output_has_no_duplicate_points(self):
        # strongly overlapping patches on a closed surface
        rng = np.random.default_rng(24)
        sphere = rng.standard_normal((80, 3))
        sphere /= np.linalg.norm(sphere, axis=1)[:, None]
        w = NetworkWeights.initialize(ARCH, seed=14)
        cfg = tiny_cfg(ratio=2.0, iterations=1)
        up = upsample_full_shape(sphere, w, cfg, patch_size=30)
        from scipy.spatial import cKDTree

        assert len(cKDTree(up.points).query_pairs(r=1e-12)) == 0

    def test_single_patch_matches_patch_path_candidates(self):
        """One patch covering every point reduces to the single-patch pipeline
        up to patch normalization: the output is drawn from (numerically) the
        same candidate set. Full-grid sampling makes chart order irrelevant."""
        pts = patch_cloud(20, seed=25)
        w = NetworkWeights.zeros(ARCH)
        # ceil(ratio) + oversample = d*d: every chart samples the whole grid
        cfg = tiny_cfg(ratio=7.0, iterations=1, oversample=2)
        full = upsample_full_shape(pts, w, cfg, patch_size=64, seed_count=1)
        assert len(full.points) == 140
        _, trace = upsample_iterative(pts, w, cfg)
        cand = trace[-1].candidates
        d2 = ((full.points[:, None, :] - cand[None, :, :]) ** 2).sum(axis=2)
        assert np.sqrt(d2.min(axis=1)).max() < 1e-9

    def test_accepts_point_cloud(self):
        pts = patch_cloud(40, seed=21)
        w = NetworkWeights.zeros(ARCH)
        cfg = tiny_cfg(iterations=1)
        up = upsample_full_shape(PointCloud(pts), w, cfg, patch_size=20)
        assert len(up.points) == int(math.floor(cfg.ratio * 40))

    def test_too_few_points(self):
        w = NetworkWeights.zeros(ARCH)
        with pytest.raises(DataError, match="k1"):
            upsample_full_shape(np.zeros((2, 3)), w, tiny_cfg())
