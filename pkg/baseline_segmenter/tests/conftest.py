"""Synthetic datasets written directly in the on-disk layout the models
consume, so the tests exercise the file contract rather than any shared
code."""

import json

import numpy as np
import pytest
from PIL import Image


def disk_mask(shape, center, radius) -> np.ndarray:
    yy, xx = np.mgrid[:shape[0], :shape[1]]
    return (yy - center[0]) ** 2 + (xx - center[1]) ** 2 <= radius ** 2


def disk_frame(shape, center, radius, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    img = np.full(shape, 0.2) + 0.65 * disk_mask(shape, center, radius)
    img = np.clip(img + rng.normal(0, 0.03, shape), 0, 1)
    return (img * 255).astype(np.uint8)


def video_record(vid, plexus, n_frames, eval_resolution=(256, 192)):
    return {
        "id": vid,
        "machine": "esaote",
        "plexus": plexus,
        "side": "left",
        "gain": "medium",
        "depth_setting": "",
        "width": eval_resolution[0],
        "height": eval_resolution[1],
        "n_frames": n_frames,
        "eval_resolution": list(eval_resolution),
        "patient": {"age": 34, "sex": "female", "height": 168.0, "bmi": 23.1},
    }


def write_video(root, record, frames, masks=None, labels=None):
    """frames: list of uint8 arrays; masks: {idx: bool array};
    labels: list of label dicts for labels/{id}.json."""
    vid = record["id"]
    frame_dir = root / "frames" / vid
    frame_dir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        Image.fromarray(frame, mode="L").save(frame_dir / f"{i:06}.png")
    for idx, mask in (masks or {}).items():
        mask_dir = root / "masks" / vid
        mask_dir.mkdir(parents=True, exist_ok=True)
        arr = np.where(mask, 255, 0).astype(np.uint8)
        Image.fromarray(arr, mode="L").save(mask_dir / f"{idx:06}.png")
    if labels is not None:
        labels_dir = root / "labels"
        labels_dir.mkdir(parents=True, exist_ok=True)
        (labels_dir / f"{vid}.json").write_text(json.dumps(
            {"frames": labels, "seed_frames": []}, indent=2))


def write_manifest(root, records):
    root.mkdir(parents=True, exist_ok=True)
    (root / "manifest.json").write_text(
        json.dumps({"videos": records}, indent=2))


@pytest.fixture
def dataset(tmp_path):
    """Two annotated videos (one per class) plus an unannotated square-aspect
    one. v1: positives 0-1, negative 2, discarded 3. v2: positive 0,
    negative 1, frame 2 unlabeled."""
    root = tmp_path / "ds"
    shape = (192, 256)
    mask = disk_mask(shape, (96, 128), 40)

    v1_frames = [disk_frame(shape, (96, 128), 40, seed=i) for i in range(4)]
    write_video(root, video_record("v1", "scbp", 4), v1_frames,
                masks={0: mask, 1: mask},
                labels=[
                    {"idx": 0, "status": "positive", "provenance": "manual"},
                    {"idx": 1, "status": "positive", "provenance": "manual"},
                    {"idx": 2, "status": "negative"},
                    {"idx": 3, "status": "discarded"},
                ])

    v2_frames = [disk_frame(shape, (100, 120), 32, seed=10 + i)
                 for i in range(3)]
    write_video(root, video_record("v2", "isc", 3), v2_frames,
                masks={0: disk_mask(shape, (100, 120), 32)},
                labels=[
                    {"idx": 0, "status": "positive", "provenance": "manual"},
                    {"idx": 1, "status": "negative"},
                ])

    square = [disk_frame((256, 256), (128, 128), 40, seed=99)]
    write_video(root, video_record("v3", "scbp", 1, eval_resolution=(256, 256)),
                square)

    write_manifest(root, [video_record("v1", "scbp", 4),
                          video_record("v2", "isc", 3),
                          video_record("v3", "scbp", 1,
                                       eval_resolution=(256, 256))])
    (root / "splits.json").write_text(json.dumps({
        "seed": 0,
        "folds": [{"train": ["v1"], "val": ["v2"], "test": ["v2"]}],
    }))
    return root


@pytest.fixture(scope="session")
def solo_root(tmp_path_factory):
    """One scbp video with two positive disk frames, for quick fits."""
    root = tmp_path_factory.mktemp("solo") / "ds"
    shape = (192, 256)
    mask = disk_mask(shape, (96, 128), 40)
    record = video_record("solo", "scbp", 2)
    frames = [disk_frame(shape, (96, 128), 40, seed=50 + i) for i in range(2)]
    write_video(root, record, frames, masks={0: mask, 1: mask},
                labels=[{"idx": 0, "status": "positive"},
                        {"idx": 1, "status": "positive"}])
    write_manifest(root, [record])
    return root


@pytest.fixture(scope="session")
def trained_checkpoint(solo_root, tmp_path_factory):
    """A small unet fitted to the solo video at reduced resolution.

    Shared across test modules because even a short CPU fit dominates the
    suite runtime.
    """
    from baseline_segmenter import TrainConfig, train

    cfg = TrainConfig(model="unet", epochs=25, patience=25,
                      learning_rate=3e-3, input_resolution=(64, 48), seed=3)
    out = tmp_path_factory.mktemp("ckpt") / "solo.pt"
    train(solo_root, {"train": ["solo"]}, cfg, out)
    return out
