"""Bounding boxes and helpers for the mask/box geometry shared by all stages."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError

MIN_BOX_SIDE = 8


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixel coordinates, top-left origin."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < MIN_BOX_SIDE or self.h < MIN_BOX_SIDE:
            raise GeometryError(
                f"box sides must be >= {MIN_BOX_SIDE} px, got {self.w}x{self.h}"
            )

    @property
    def center(self) -> tuple[float, float]:
        """(cy, cx) in float pixel coordinates."""
        return (self.y + self.h / 2.0, self.x + self.w / 2.0)

    @property
    def area(self) -> int:
        return self.w * self.h

    def intersects(self, frame_w: int, frame_h: int) -> bool:
        return self.x < frame_w and self.y < frame_h and self.x + self.w > 0 and self.y + self.h > 0

    def clamped(self, frame_w: int, frame_h: int) -> "BoundingBox":
        """Translate the box so it lies fully inside a frame of the given size."""
        x = min(max(self.x, 0), max(frame_w - self.w, 0))
        y = min(max(self.y, 0), max(frame_h - self.h, 0))
        return BoundingBox(x, y, self.w, self.h)

    def clipped(self, frame_w: int, frame_h: int) -> tuple[int, int, int, int]:
        """Intersection with the frame as (x0, y0, x1, y1); may be empty."""
        x0 = max(self.x, 0)
        y0 = max(self.y, 0)
        x1 = min(self.x + self.w, frame_w)
        y1 = min(self.y + self.h, frame_h)
        return x0, y0, max(x1, x0), max(y1, y0)

    def to_json(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}

    @classmethod
    def from_json(cls, obj: dict) -> "BoundingBox":
        return cls(int(obj["x"]), int(obj["y"]), int(obj["w"]), int(obj["h"]))


def require_same_shape(a: np.ndarray, b: np.ndarray, what: str = "arrays") -> None:
    if a.shape != b.shape:
        raise GeometryError(f"{what} differ in shape: {a.shape} vs {b.shape}")


def as_bool_mask(mask: np.ndarray) -> np.ndarray:
    """Coerce a two-valued array (bool, 0/1 or 0/255) to a bool mask."""
    arr = np.asarray(mask)
    if arr.dtype == bool:
        return arr
    values = np.unique(arr)
    if not np.isin(values, (0, 1)).all() and not np.isin(values, (0, 255)).all():
        raise GeometryError("mask is not two-valued")
    return arr > 0
