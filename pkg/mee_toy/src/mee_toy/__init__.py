"""Toy-scale map element encoder for rule-lane association."""

from mee_toy.config import EncoderConfig
from mee_toy.model import MapElementEncoder, VectorBatch, build_masks
from mee_toy.train import TrainResult, roc_auc, train_toy

__version__ = "0.1.0"

__all__ = [
    "EncoderConfig",
    "MapElementEncoder",
    "VectorBatch",
    "build_masks",
    "TrainResult",
    "roc_auc",
    "train_toy",
    "__version__",
]
