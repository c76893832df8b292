from .cloud import Aabb, PointCloud, bounding_box
from .index import SpatialIndex, fps, knn, knn_batch, radius_neighbors
from .mesh import TriangleMesh, point_triangle_distances, sample_mesh
from .normals import estimate_normals, orient_away_from_centroid, pca_normal

__all__ = [
    "Aabb",
    "PointCloud",
    "SpatialIndex",
    "TriangleMesh",
    "bounding_box",
    "estimate_normals",
    "fps",
    "knn",
    "knn_batch",
    "orient_away_from_centroid",
    "pca_normal",
    "point_triangle_distances",
    "radius_neighbors",
    "sample_mesh",
]
