from .energy import FieldEnergyReport, field_energy, neighbor_graph, pairwise_smooth_loss
from .export import export_field
from .frames import (
    ROSY_SYMMETRY,
    CrossFrame,
    default_frame,
    enforce_frame,
    frames_to_arrays,
    rosy_representatives,
    rosy_rotate,
)
from .solver import optimize_field

__all__ = [
    "ROSY_SYMMETRY",
    "CrossFrame",
    "FieldEnergyReport",
    "default_frame",
    "enforce_frame",
    "export_field",
    "field_energy",
    "frames_to_arrays",
    "neighbor_graph",
    "optimize_field",
    "pairwise_smooth_loss",
    "rosy_representatives",
    "rosy_rotate",
]
