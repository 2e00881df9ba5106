"""Training and evaluation harness for crop-detection models.

Consumes cropforge dataset directories (records, manifests, pretext batch
files) and trains a three-branch detector: per-patch grid-cell classification,
crop rectangle regression, and a cropped/uncropped decision.
"""

__version__ = "0.1.0"

from .config import ModelConfig, learning_rate
from .loss import NonFiniteLossError, compute_loss
from .model import ConstructionError, CropDetector, PredictionBundle, build_model
from .train import TrainingDiverged, load_checkpoint, train_pretext, train_records

__all__ = [
    "ModelConfig",
    "learning_rate",
    "compute_loss",
    "NonFiniteLossError",
    "build_model",
    "CropDetector",
    "PredictionBundle",
    "ConstructionError",
    "train_records",
    "train_pretext",
    "load_checkpoint",
    "TrainingDiverged",
    "__version__",
]
