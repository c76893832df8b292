"""crossup: arbitrary-ratio point cloud upsampling via cross fields and
learned tangent-chart mapping."""

__version__ = "0.1.0"

from .config import UpsampleConfig
from .errors import CrossupError, DataError, DegenerateNeighborhoodError, EmptyIndexError, NumericError
from .geometry import Aabb, PointCloud, SpatialIndex, bounding_box, fps, knn, radius_neighbors
from .geometry.io import read_cloud, write_cloud
from .geometry.mesh import TriangleMesh, sample_mesh
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.layers import NetArchitecture, NetworkWeights
from .objectives.metrics import chamfer, evaluate_cloud, hausdorff, p2f, uni_metric
from .pipeline import upsample_full_shape, upsample_iterative, upsample_patch_once

__all__ = [
    "__version__",
    "UpsampleConfig",
    "CrossupError",
    "DataError",
    "DegenerateNeighborhoodError",
    "EmptyIndexError",
    "NumericError",
    "Aabb",
    "PointCloud",
    "SpatialIndex",
    "bounding_box",
    "fps",
    "knn",
    "radius_neighbors",
    "read_cloud",
    "write_cloud",
    "TriangleMesh",
    "sample_mesh",
    "load_checkpoint",
    "save_checkpoint",
    "NetArchitecture",
    "NetworkWeights",
    "chamfer",
    "evaluate_cloud",
    "hausdorff",
    "p2f",
    "uni_metric",
    "upsample_full_shape",
    "upsample_iterative",
    "upsample_patch_once",
]
