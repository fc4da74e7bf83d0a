"""Training configuration and its content hash."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .errors import ConfigError

MODELS = ("deeplabv3", "deeplabv3plus", "unet", "unetpp")
CLASSES = ("scbp", "isc")

DEFAULT_GAMMA_RANGES = {
    "low": (1.5, 2.0),
    "medium": (0.75, 1.33),
    "high": (0.5, 0.75),
}


@dataclass(frozen=True)
class AugmentSpec:
    """Photometric/geometric jitter applied to training samples. Gamma draws
    depend on the video's gain setting so brightness augmentation counters
    the amplifier differences between recordings."""

    enabled: bool = True
    flip_probability: float = 0.5
    rotation_degrees: float = 10.0
    gamma_ranges: dict = field(
        default_factory=lambda: dict(DEFAULT_GAMMA_RANGES))

    def __post_init__(self):
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ConfigError("flip_probability must lie in [0, 1]")
        if self.rotation_degrees < 0:
            raise ConfigError("rotation_degrees must be >= 0")
        for gain, (lo, hi) in self.gamma_ranges.items():
            if not 0 < lo <= hi:
                raise ConfigError(
                    f"gamma range for {gain!r} must satisfy 0 < low <= high")

    def to_json(self) -> dict:
        return {
            "enabled": self.enabled,
            "flip_probability": self.flip_probability,
            "rotation_degrees": self.rotation_degrees,
            "gamma_ranges": {k: list(v) for k, v in self.gamma_ranges.items()},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AugmentSpec":
        return cls(
            enabled=obj["enabled"],
            flip_probability=obj["flip_probability"],
            rotation_degrees=obj["rotation_degrees"],
            gamma_ranges={k: tuple(v) for k, v in obj["gamma_ranges"].items()},
        )


@dataclass(frozen=True)
class TrainConfig:
    model: str = "unetpp"
    epochs: int = 50                  # full runs stay in the 25..50 band
    batch_size: int = 16
    learning_rate: float = 1e-3      # Adam default; recorded in run metadata
    patience: int = 10
    pretrained: bool = False         # backbone weights need a download route
    classes: tuple[str, ...] = CLASSES
    input_resolution: tuple[int, int] | None = None  # (w, h); None = dataset's
    augment: AugmentSpec = field(default_factory=lambda: AugmentSpec(enabled=False))
    seed: int = 0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; pick one of {MODELS}")
        if not 25 <= self.epochs <= 50:
            raise ConfigError("epochs must lie in [25, 50]")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.patience <= 0:
            raise ConfigError("early-stopping patience must be > 0")
        if not self.classes:
            raise ConfigError("at least one output class is required")
        if self.input_resolution is not None:
            w, h = self.input_resolution
            if w < 32 or h < 32:
                raise ConfigError("input_resolution must be at least 32x32")

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "patience": self.patience,
            "pretrained": self.pretrained,
            "classes": list(self.classes),
            "input_resolution": (list(self.input_resolution)
                                 if self.input_resolution else None),
            "augment": self.augment.to_json(),
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        res = obj.get("input_resolution")
        return cls(
            model=obj["model"],
            epochs=obj["epochs"],
            batch_size=obj["batch_size"],
            learning_rate=obj["learning_rate"],
            patience=obj["patience"],
            pretrained=obj.get("pretrained", False),
            classes=tuple(obj["classes"]),
            input_resolution=tuple(res) if res else None,
            augment=AugmentSpec.from_json(obj["augment"]),
            seed=obj["seed"],
        )

    def content_hash(self) -> str:
        payload = json.dumps(self.to_json(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()
