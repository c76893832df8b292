from .losses import (
    LossBreakdown,
    PredictionBundle,
    chamfer_loss,
    normal_alignment_loss,
    one_pass_loss,
    orthogonality_loss,
    smoothness_loss,
    uniform_loss,
)
from .metrics import (
    MetricReport,
    chamfer,
    evaluate_cloud,
    hausdorff,
    p2f,
    uni_metric,
)

__all__ = [
    "LossBreakdown",
    "MetricReport",
    "PredictionBundle",
    "chamfer",
    "chamfer_loss",
    "evaluate_cloud",
    "hausdorff",
    "normal_alignment_loss",
    "one_pass_loss",
    "orthogonality_loss",
    "p2f",
    "smoothness_loss",
    "uni_metric",
    "uniform_loss",
]
