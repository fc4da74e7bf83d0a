"""Shared synthetic fixtures: videos with a moving textured square, and
stores populated with them."""

from __future__ import annotations

import numpy as np
import pytest

from nervetrace.store import DatasetStore, PatientMeta


def textured_square_frame(center: tuple[float, float], size: int,
                          shape: tuple[int, int], texture: np.ndarray,
                          noise_sd: float, rng: np.random.Generator,
                          background: float = 0.2) -> np.ndarray:
    """Float [0, 1] frame with a textured square blitted at `center` (cy, cx)
    over a noisy background. The texture array travels with the square so
    the target has trackable structure."""
    h, w = shape
    img = np.full(shape, background)
    y0 = int(round(center[0] - size / 2))
    x0 = int(round(center[1] - size / 2))
    ys = slice(max(y0, 0), min(y0 + size, h))
    xs = slice(max(x0, 0), min(x0 + size, w))
    ty = slice(ys.start - y0, ys.stop - y0)
    tx = slice(xs.start - x0, xs.stop - x0)
    img[ys, xs] = texture[ty, tx]
    img = img + rng.normal(0.0, noise_sd, shape)
    return np.clip(img, 0.0, 1.0)


def moving_square_video(n_frames: int, *, seed: int, shape=(160, 200),
                        size: int = 28, start=(60.0, 70.0), velocity=(1.0, 1.5),
                        noise_sd: float = 0.03) -> tuple[list[np.ndarray], list[tuple[float, float]]]:
    """uint8 frames plus the true (cy, cx) center per frame."""
    rng = np.random.default_rng(seed)
    texture = np.clip(rng.normal(0.75, 0.08, (size, size)), 0.3, 1.0)
    frames, centers = [], []
    cy, cx = start
    vy, vx = velocity
    for _ in range(n_frames):
        f = textured_square_frame((cy, cx), size, shape, texture, noise_sd, rng)
        frames.append((f * 255).astype(np.uint8))
        centers.append((cy, cx))
        cy += vy
        cx += vx
    return frames, centers


@pytest.fixture
def store(tmp_path):
    return DatasetStore.create(tmp_path / "ds")


@pytest.fixture
def seeded_store(store):
    """Store holding one 12-frame synthetic video with a drifting square."""
    frames, centers = moving_square_video(12, seed=5)
    store.ingest_video(
        frames, id="clip", machine="esaote", plexus="scbp", side="left",
        gain="medium",
        patient=PatientMeta(age=34, sex="female", height=168, bmi=23.1))
    store._test_centers = centers
    return store
