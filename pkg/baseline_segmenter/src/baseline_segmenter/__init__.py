"""Reference segmentation models for nervetrace datasets: four
encoder-decoder architectures, a fold trainer with early stopping, and an
inference writer whose output the dataset evaluator consumes directly."""

from .config import CLASSES, MODELS, AugmentSpec, TrainConfig
from .errors import ConfigError
from .models import build_model
from .predict import predict_masks
from .train import dice_score, fine_tune, load_checkpoint, train

__all__ = [
    "AugmentSpec",
    "CLASSES",
    "ConfigError",
    "MODELS",
    "TrainConfig",
    "build_model",
    "dice_score",
    "fine_tune",
    "load_checkpoint",
    "predict_masks",
    "train",
]
