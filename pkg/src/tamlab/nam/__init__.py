"""Neural antenna muting: features, classifier, losses, training, metrics."""

from .features import featurize, full_array_precoders
from .losses import (
    LossConfig,
    asymmetric_penalty,
    cross_entropy,
    softargmax,
    softmax,
    total_loss,
)
from .metrics import EvalMetrics, evaluate, metrics_from_predictions
from .model import NamArchitecture, NamModel
from .training import TrainConfig, TrainingDiverged, one_hot, train

__all__ = [
    "EvalMetrics", "LossConfig", "NamArchitecture", "NamModel", "TrainConfig", "TrainingDiverged",
    "asymmetric_penalty", "cross_entropy", "evaluate", "featurize", "full_array_precoders",
    "metrics_from_predictions", "one_hot", "softargmax", "softmax", "total_loss", "train",
]
