from .checkpoint import load_checkpoint, save_checkpoint
from .layers import (
    ExtractorOutput,
    NetArchitecture,
    NetworkWeights,
    forward_chart,
    forward_extractor,
    forward_mapper,
)
from .optim import AdamState, adam_step, adam_update
from .tensor import (
    Node,
    Tape,
    Tensor,
    backward,
    record,
)

__all__ = [
    "AdamState",
    "ExtractorOutput",
    "NetArchitecture",
    "NetworkWeights",
    "Node",
    "Tape",
    "Tensor",
    "adam_step",
    "adam_update",
    "backward",
    "forward_chart",
    "forward_extractor",
    "forward_mapper",
    "load_checkpoint",
    "record",
    "save_checkpoint",
]
