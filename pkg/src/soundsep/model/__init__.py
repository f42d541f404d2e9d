from .config import ModelConfig
from .network import Separator, TrackOutputs
from .scan import selective_scan, selective_scan_reference
from .checkpoint import save_checkpoint, load_checkpoint

__all__ = [
    "ModelConfig",
    "Separator",
    "TrackOutputs",
    "selective_scan",
    "selective_scan_reference",
    "save_checkpoint",
    "load_checkpoint",
]
