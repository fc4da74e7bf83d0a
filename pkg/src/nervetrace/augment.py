"""Training-time frame augmentation: mirror flip, small rotation, and a
gain-conditioned gamma shift.

Sampling and application are split so range checks can draw parameters
without paying for image warps. Flip is the only probabilistic transform;
rotation and gamma always apply with random parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import cv2
import numpy as np

from .errors import ParamError
from .geometry import as_bool_mask, require_same_shape

# darkening for high-gain clips, brightening for low-gain, mild both ways
# for medium
GAIN_GAMMA_RANGES = {
    "high": (1.5, 2.0),
    "low": (0.5, 0.75),
    "medium": (0.75, 1.33),
}


@dataclass(frozen=True)
class AugmentConfig:
    flip_probability: float = 0.5
    rotation_range: tuple[float, float] = (-10.0, 10.0)
    gamma_ranges: dict = field(default_factory=lambda: dict(GAIN_GAMMA_RANGES))
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ParamError("flip_probability must lie in [0, 1]")
        lo, hi = self.rotation_range
        if lo > hi:
            raise ParamError("rotation_range must be ordered (low, high)")
        for gain, (glo, ghi) in self.gamma_ranges.items():
            if not 0 < glo <= ghi:
                raise ParamError(f"gamma range for {gain!r} must satisfy 0 < low <= high")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


@dataclass(frozen=True)
class AugmentParams:
    """One concrete draw: whether to mirror, the rotation angle in degrees,
    and the gamma exponent."""

    flip: bool
    angle: float
    gamma: float

    def to_json(self) -> dict:
        return {"flip": self.flip, "angle": self.angle, "gamma": self.gamma}


def sample_params(config: AugmentConfig, gain: str,
                  rng: np.random.Generator) -> AugmentParams:
    if gain not in config.gamma_ranges:
        raise ParamError(f"no gamma range configured for gain {gain!r}")
    flip = bool(rng.random() < config.flip_probability)
    angle = float(rng.uniform(*config.rotation_range))
    gamma = float(rng.uniform(*config.gamma_ranges[gain]))
    return AugmentParams(flip=flip, angle=angle, gamma=gamma)


def gamma_transform(image: np.ndarray, gamma: float) -> np.ndarray:
    """Elementwise power map on intensities in [0, 1]."""
    if gamma <= 0:
        raise ParamError("gamma must be > 0")
    return np.power(np.asarray(image, dtype=np.float64), gamma)


def _rotate(img: np.ndarray, angle: float, interpolation: int) -> np.ndarray:
    h, w = img.shape
    matrix = cv2.getRotationMatrix2D(((w - 1) / 2.0, (h - 1) / 2.0), angle, 1.0)
    return cv2.warpAffine(img, matrix, (w, h), flags=interpolation,
                          borderMode=cv2.BORDER_CONSTANT, borderValue=0)


def apply_params(frame: np.ndarray, mask: np.ndarray,
                 params: AugmentParams) -> tuple[np.ndarray, np.ndarray]:
    """Warp a frame/mask pair identically: flip, then rotate about the image
    center. Frames interpolate bilinearly, masks use nearest neighbour and
    come back strictly binary. Gamma shifts the frame only, computed on
    intensities normalized to [0, 1] and rescaled to uint8 afterwards."""
    mask = as_bool_mask(mask)
    require_same_shape(frame, mask, "frame and mask")
    frame = np.asarray(frame, dtype=np.uint8)

    if params.flip:
        frame = frame[:, ::-1].copy()
        mask = mask[:, ::-1].copy()
    if params.angle != 0.0:
        frame = _rotate(frame, params.angle, cv2.INTER_LINEAR)
        mask = _rotate(mask.astype(np.uint8) * 255, params.angle,
                       cv2.INTER_NEAREST) > 127
    shifted = gamma_transform(frame.astype(np.float64) / 255.0, params.gamma)
    frame = np.clip(np.round(shifted * 255.0), 0, 255).astype(np.uint8)
    return frame, mask


def augment(frame: np.ndarray, mask: np.ndarray, gain: str,
            rng: np.random.Generator,
            config: AugmentConfig | None = None,
            ) -> tuple[np.ndarray, np.ndarray, AugmentParams]:
    """Draw parameters and apply them, returning the transformed pair along
    with the record of what was sampled."""
    config = config or AugmentConfig()
    params = sample_params(config, gain, rng)
    out_frame, out_mask = apply_params(frame, mask, params)
    return out_frame, out_mask, params
