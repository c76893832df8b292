"""Network building blocks: point feature extractor, chart feature network,
tangent-offset mapper, and the container for their weights."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError
from ..field.frames import CrossFrame, default_frame, enforce_frame
from . import tensor as T
from .tensor import Tensor


@dataclass(frozen=True)
class NetArchitecture:
    """Width/shape knobs shared by every forward pass.

    Desk-scale defaults keep training on a CPU tractable; the voxel channel
    count and point feature width are deliberately small.
    """

    d: int = 7  # chart grid dimension (odd)
    c: int = 8  # voxel feature channels after inpainting
    c_f: int = 16  # per-point feature width from the extractor
    edge_hidden: int = 32
    trunk_hidden: int = 32
    mapper_hidden: int = 64
    graph_k: int = 8  # extractor knn graph size

    @property
    def cell_width(self) -> int:
        # tangent cell feature width after stacking the z axis into channels
        return self.d * self.c

    @property
    def mapper_in(self) -> int:
        return 2 + self.cell_width

    def parameter_shapes(self) -> dict[str, tuple]:
        h_e, h_t, h_m = self.edge_hidden, self.trunk_hidden, self.mapper_hidden
        w = self.cell_width
        return {
            "extractor.edge.weight": (6, h_e),
            "extractor.edge.bias": (h_e,),
            "extractor.trunk.weight": (h_e, h_t),
            "extractor.trunk.bias": (h_t,),
            "extractor.normal_head.weight": (h_t, 3),
            "extractor.normal_head.bias": (3,),
            "extractor.theta_head.weight": (h_t, 3),
            "extractor.theta_head.bias": (3,),
            "extractor.feature_head.weight": (h_t, self.c_f),
            "extractor.feature_head.bias": (self.c_f,),
            "inpaint.conv1.weight": (self.c, self.c_f, 3, 3, 3),
            "inpaint.conv1.bias": (self.c,),
            "inpaint.conv2.weight": (self.c, self.c, 3, 3, 3),
            "inpaint.conv2.bias": (self.c,),
            "compress.weight": (w, w, 1, 1),
            "compress.bias": (w,),
            "mapper.layer1.weight": (self.mapper_in, h_m),
            "mapper.layer1.bias": (h_m,),
            "mapper.layer2.weight": (h_m, h_m),
            "mapper.layer2.bias": (h_m,),
            "mapper.layer3.weight": (h_m, 3),
            "mapper.layer3.bias": (3,),
        }


def _fan_in(name: str, shape: tuple) -> int:
    if name.endswith(".bias"):
        return shape[0]
    if len(shape) == 2:  # linear weight (in, out)
        return shape[0]
    # conv weight (out, in, *kernel)
    return int(np.prod(shape[1:]))


@dataclass
class NetworkWeights:
    """Named parameter tensors for the whole model."""

    arch: NetArchitecture
    params: dict[str, Tensor] = field(default_factory=dict)

    @classmethod
    def initialize(cls, arch: NetArchitecture, seed: int = 0) -> "NetworkWeights":
        """Seeded He-style uniform init: U(-sqrt(6/fan_in), +sqrt(6/fan_in));
        biases start at zero. Parameter order is fixed, so one seed fully
        determines every value."""
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in arch.parameter_shapes().items():
            if name.endswith(".bias"):
                params[name] = T.parameter(np.zeros(shape))
            else:
                limit = np.sqrt(6.0 / _fan_in(name, shape))
                params[name] = T.parameter(rng.uniform(-limit, limit, size=shape))
        return cls(arch=arch, params=params)

    @classmethod
    def zeros(cls, arch: NetArchitecture) -> "NetworkWeights":
        return cls(
            arch=arch,
            params={
                name: T.parameter(np.zeros(shape))
                for name, shape in arch.parameter_shapes().items()
            },
        )

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def copy(self) -> "NetworkWeights":
        out = NetworkWeights(arch=self.arch)
        out.params = {k: T.parameter(v.data) for k, v in self.params.items()}
        return out

    def l2_distance(self, other: "NetworkWeights") -> float:
        total = 0.0
        for k, v in self.params.items():
            total += float(np.sum((v.data - other.params[k].data) ** 2))
        return float(np.sqrt(total))


def _linear(x: Tensor, weights: NetworkWeights, name: str) -> Tensor:
    return T.matmul(x, weights[f"{name}.weight"]) + weights[f"{name}.bias"]


@dataclass
class ExtractorOutput:
    """Raw head outputs (kept differentiable) plus canonicalized frames."""

    normals: Tensor  # (m, 3) raw normal head
    thetas: Tensor  # (m, 3) raw tangent head
    features: Tensor  # (m, c_f)
    frames: list  # CrossFrame per point, from the normalized heads


def _frames_from_heads(normals: np.ndarray, thetas: np.ndarray) -> list:
    frames = []
    for n, t in zip(normals, thetas):
        if np.linalg.norm(n) <= 1e-12:
            frames.append(default_frame())
        else:
            frames.append(enforce_frame(n, t))
    return frames


def forward_extractor(
    points: np.ndarray,
    knn_idx: np.ndarray,
    weights: NetworkWeights,
    ablate_positions: bool = False,
    frame_rotations: np.ndarray | None = None,
) -> ExtractorOutput:
    """Per-point features by edge convolution over a knn graph.

    Edge features [x_i | x_j - x_i] go through one linear+ReLU layer, are
    max-pooled over each point's neighbors, pass a shared trunk, and feed
    three linear heads: normal, tangent and feature. The pooled max makes the
    output invariant to neighbor order; `ablate_positions` zeroes the
    absolute-position half of the edge features, which makes the forward pass
    translation invariant.

    `frame_rotations` (m, 3, 3), columns [tangent, binormal, normal]: when
    given, each point's edge coordinates are expressed in its own frame
    (x @ R_i), so features become invariant under rigid motion as long as the
    frames themselves move with the cloud.
    """
    pts = np.asarray(points, dtype=np.float64)
    idx = np.asarray(knn_idx, dtype=np.intp)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DataError(f"points must be (m, 3), got {pts.shape}")
    if idx.ndim != 2 or len(idx) != len(pts):
        raise DataError("knn_idx must be (m, k) with one row per point")
    m, k = idx.shape
    xi = np.repeat(pts[:, None, :], k, axis=1)
    xj = pts[idx]
    delta = xj - xi
    if frame_rotations is not None:
        rot = np.asarray(frame_rotations, dtype=np.float64)
        if rot.shape != (m, 3, 3):
            raise DataError(f"frame_rotations must be ({m}, 3, 3), got {rot.shape}")
        xi = np.einsum("mki,mij->mkj", xi, rot)
        delta = np.einsum("mki,mij->mkj", delta, rot)
    if ablate_positions:
        xi = np.zeros_like(xi)
    edge = np.concatenate([xi, delta], axis=2).reshape(m * k, 6)

    h = T.relu(_linear(T.constant(edge), weights, "extractor.edge"))
    h = T.reshape(h, (m, k, weights.arch.edge_hidden))
    pooled = T.tmax(h, axis=1)
    trunk = T.relu(_linear(pooled, weights, "extractor.trunk"))
    normals = _linear(trunk, weights, "extractor.normal_head")
    thetas = _linear(trunk, weights, "extractor.theta_head")
    features = _linear(trunk, weights, "extractor.feature_head")
    frames = _frames_from_heads(normals.data, thetas.data)
    return ExtractorOutput(normals=normals, thetas=thetas, features=features, frames=frames)


def forward_chart(voxel_features, weights: NetworkWeights) -> Tensor:
    """Chart features: two 3x3x3 convs (inpainting toward empty voxels), the z
    axis stacked into channels, then a 1x1 2D conv over the tangent grid.

    Input (B, c_f, d, d, d) or unbatched; output (B, d, d, d*c) aligned with
    tangent_grid_points order. ReLU after every conv; receptive field is the
    two convolutions' (<= 2 cells).
    """
    x = voxel_features if isinstance(voxel_features, Tensor) else T.constant(voxel_features)
    batched = x.ndim == 5
    if not batched:
        x = T.reshape(x, (1,) + x.shape)
    arch = weights.arch
    if x.shape[1] != arch.c_f or x.shape[2:] != (arch.d, arch.d, arch.d):
        raise DataError(
            f"voxel features must be (B, {arch.c_f}, {arch.d}, {arch.d}, {arch.d}), got {x.shape}"
        )
    h = T.relu(T.conv3d(x, weights["inpaint.conv1.weight"], weights["inpaint.conv1.bias"]))
    h = T.relu(T.conv3d(h, weights["inpaint.conv2.weight"], weights["inpaint.conv2.bias"]))
    b = h.shape[0]
    # (B, c, x, y, z) -> (B, x, y, z*c): cell feature stacks the z column
    h = T.transpose(h, (0, 2, 3, 4, 1))
    h = T.reshape(h, (b, arch.d, arch.d, arch.cell_width))
    h = T.transpose(h, (0, 3, 1, 2))
    h = T.relu(T.conv2d(h, weights["compress.weight"], weights["compress.bias"]))
    h = T.transpose(h, (0, 2, 3, 1))
    if not batched:
        h = T.reshape(h, h.shape[1:])
    return h


def forward_mapper(positions, features, weights: NetworkWeights) -> Tensor:
    """Tangent position (x, y) + cell feature -> 3D chart-space offset.

    MLP [2 + d*c] -> hidden -> hidden -> 3, ReLU on hidden layers, linear out.
    Pure function of its inputs: identical (position, feature) rows give
    identical offsets.
    """
    p = positions if isinstance(positions, Tensor) else T.constant(np.asarray(positions, dtype=np.float64))
    f = features if isinstance(features, Tensor) else T.constant(np.asarray(features, dtype=np.float64))
    if p.ndim != 2 or p.shape[1] != 2:
        raise DataError(f"positions must be (n, 2), got {p.shape}")
    if f.ndim != 2 or f.shape[1] != weights.arch.cell_width:
        raise DataError(f"features must be (n, {weights.arch.cell_width}), got {f.shape}")
    x = T.concat([p, f], axis=1)
    x = T.relu(_linear(x, weights, "mapper.layer1"))
    x = T.relu(_linear(x, weights, "mapper.layer2"))
    return _linear(x, weights, "mapper.layer3")
