from .dataset import (
    DESK_BASE_POINTS,
    DESK_GT_POINTS,
    DESK_INPUT_POINTS,
    PatchPair,
    crop_size,
    load_dataset,
    make_dataset,
    save_dataset,
    split_dataset,
)
from .shapes import HELDOUT_SHAPES, SHAPE_CATALOG, TRAIN_SHAPES, build_shape
from .trainer import (
    CSV_HEADER,
    TrainConfig,
    TrainForward,
    TrainResult,
    patch_loss,
    train,
    train_forward_pass,
    validation_loss,
    write_curves_csv,
)

__all__ = [
    "DESK_BASE_POINTS",
    "DESK_GT_POINTS",
    "DESK_INPUT_POINTS",
    "PatchPair",
    "crop_size",
    "load_dataset",
    "make_dataset",
    "save_dataset",
    "split_dataset",
    "HELDOUT_SHAPES",
    "SHAPE_CATALOG",
    "TRAIN_SHAPES",
    "build_shape",
    "CSV_HEADER",
    "TrainConfig",
    "TrainForward",
    "TrainResult",
    "patch_loss",
    "train",
    "train_forward_pass",
    "validation_loss",
    "write_curves_csv",
]
